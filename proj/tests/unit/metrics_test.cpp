#include <bmdqn/metrics.hpp>

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace bmdqn::cli;

TEST_CASE("the csv header names the fixed columns") {
    CHECK(csv_header() ==
          "run_id,phase,meta_iteration,adaptation_step,task_id,episode_return,avg_queue");
}

TEST_CASE("rows serialize set fields and leave the rest empty") {
    MetricsRecord rec;
    rec.run_id = "nav2d-bm_dqn-s1";
    rec.phase = "train";
    rec.meta_iteration = 3;
    rec.has_return = true;
    rec.episode_return = -12.5;
    CHECK(to_csv_row(rec) == "nav2d-bm_dqn-s1,train,3,,,-12.5,");

    MetricsRecord test_rec;
    test_rec.run_id = "r";
    test_rec.phase = "test";
    test_rec.adaptation_step = 2;
    test_rec.task_id = 7;
    test_rec.has_return = true;
    test_rec.episode_return = -1.0;
    test_rec.has_queue = true;
    test_rec.avg_queue = 2.25;
    CHECK(to_csv_row(test_rec) == "r,test,,2,7,-1,2.25");
}

TEST_CASE("fields containing separators are quoted") {
    MetricsRecord rec;
    rec.run_id = "a,b";
    rec.phase = "train";
    CHECK(to_csv_row(rec) == "\"a,b\",train,,,,,");

    MetricsRecord quoted;
    quoted.run_id = "say \"hi\"";
    quoted.phase = "train";
    CHECK(to_csv_row(quoted) == "\"say \"\"hi\"\"\",train,,,,,");
}

TEST_CASE("metric files are written byte-for-byte reproducibly") {
    const std::filesystem::path dir = std::filesystem::path(BMDQN_TEST_TMP);
    std::filesystem::create_directories(dir);
    const std::string path_a = (dir / "metrics_a.csv").string();
    const std::string path_b = (dir / "metrics_b.csv").string();

    std::vector<MetricsRecord> rows(2);
    rows[0].run_id = "run";
    rows[0].phase = "train";
    rows[0].meta_iteration = 0;
    rows[0].has_return = true;
    rows[0].episode_return = -0.1234567890123456789;
    rows[1].run_id = "run";
    rows[1].phase = "test";
    rows[1].adaptation_step = 1;
    rows[1].task_id = 0;
    rows[1].has_return = true;
    rows[1].episode_return = -2.0;

    write_metrics_csv(path_a, rows);
    write_metrics_csv(path_b, rows);
    const auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(path_a);
    CHECK(a == slurp(path_b));
    CHECK(a.find("\r") == std::string::npos);
    CHECK(a.back() == '\n');
    CHECK(a.substr(0, csv_header().size()) == csv_header());
}

TEST_CASE("round-tripping a double through a row loses no precision") {
    MetricsRecord rec;
    rec.run_id = "r";
    rec.phase = "train";
    rec.has_return = true;
    rec.episode_return = -0.12345678901234567;
    const std::string row = to_csv_row(rec);
    const std::size_t last_comma = row.rfind(',');
    const std::size_t first = row.find_last_of(',', last_comma - 1);
    const std::string cell = row.substr(first + 1, last_comma - first - 1);
    CHECK(std::stod(cell) == rec.episode_return);
}

TEST_CASE("sample statistics use the n-1 denominator") {
    const std::vector<double> values{1.0, 2.0, 3.0, 4.0};
    const SampleStats stats = compute_stats(values);
    CHECK(stats.count == 4);
    CHECK(stats.mean == doctest::Approx(2.5).epsilon(1e-15));
    const double expected_sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
    CHECK(stats.stddev == doctest::Approx(expected_sd).epsilon(1e-12));
    CHECK(stats.stderr_mean == doctest::Approx(expected_sd / 2.0).epsilon(1e-12));

    const std::vector<double> one{5.0};
    const SampleStats single = compute_stats(one);
    CHECK(single.count == 1);
    CHECK(single.mean == 5.0);
    CHECK(single.stddev == 0.0);
}
