#include "bmdqn/config.hpp"

#include "bmdqn/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace bmdqn::cli {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view key, std::string_view value) {
    const std::string s(value);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw UsageError("invalid numeric value for key '" + std::string(key) + "': " + s);
    return v;
}

long long parse_integer(std::string_view key, std::string_view value) {
    const std::string s(value);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty())
        throw UsageError("invalid integer value for key '" + std::string(key) + "': " + s);
    return v;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view value) {
    const std::string s(value);
    if (s.empty() || s[0] == '-')
        throw UsageError("invalid unsigned value for key '" + std::string(key) + "': " + s);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size())
        throw UsageError("invalid unsigned value for key '" + std::string(key) + "': " + s);
    return v;
}

struct KeyDef {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

KeyDef dbl_key(std::string name, double RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return format_double(c.*member); },
            [member, name](RunConfig& c, std::string_view v) {
                c.*member = parse_double(name, v);
            }};
}

KeyDef int_key(std::string name, int RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return std::to_string(c.*member); },
            [member, name](RunConfig& c, std::string_view v) {
                c.*member = static_cast<int>(parse_integer(name, v));
            }};
}

KeyDef long_key(std::string name, long RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return std::to_string(c.*member); },
            [member, name](RunConfig& c, std::string_view v) {
                c.*member = static_cast<long>(parse_integer(name, v));
            }};
}

KeyDef str_key(std::string name, std::string RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return c.*member; },
            [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

const std::vector<KeyDef>& key_registry() {
    static const std::vector<KeyDef> keys = [] {
        std::vector<KeyDef> k;
        k.push_back({"experiment",
                     [](const RunConfig& c) { return to_string(c.experiment); },
                     [](RunConfig& c, std::string_view v) { c.experiment = parse_experiment(v); }});
        k.push_back({"variant", [](const RunConfig& c) { return to_string(c.variant); },
                     [](RunConfig& c, std::string_view v) { c.variant = parse_variant(v); }});
        k.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                     [](RunConfig& c, std::string_view v) { c.seed = parse_unsigned("seed", v); }});
        k.push_back(str_key("run_id", &RunConfig::run_id));
        k.push_back(str_key("output_dir", &RunConfig::output_dir));
        k.push_back(str_key("checkpoint", &RunConfig::checkpoint));
        k.push_back(str_key("task_file", &RunConfig::task_file));
        k.push_back(long_key("meta_iterations", &RunConfig::meta_iterations));
        k.push_back(int_key("n_test_tasks", &RunConfig::n_test_tasks));
        k.push_back(dbl_key("alpha", &RunConfig::alpha));
        k.push_back(dbl_key("beta", &RunConfig::beta));
        k.push_back(dbl_key("lambda_step", &RunConfig::lambda_step));
        k.push_back(int_key("meta_batch_size", &RunConfig::meta_batch_size));
        k.push_back(int_key("inner_steps_train", &RunConfig::inner_steps_train));
        k.push_back(int_key("inner_steps_test", &RunConfig::inner_steps_test));
        k.push_back(int_key("adaptation_steps", &RunConfig::adaptation_steps));
        k.push_back(int_key("meta_update_period", &RunConfig::meta_update_period));
        k.push_back(dbl_key("kl_weight", &RunConfig::kl_weight));
        k.push_back(int_key("mc_samples", &RunConfig::mc_samples));
        k.push_back(dbl_key("log_sigma_init", &RunConfig::log_sigma_init));
        k.push_back(dbl_key("prior_sigma_floor", &RunConfig::prior_sigma_floor));
        k.push_back(dbl_key("prior_sigma_cap", &RunConfig::prior_sigma_cap));
        k.push_back(dbl_key("point_sigma", &RunConfig::point_sigma));
        k.push_back(int_key("buffer_capacity", &RunConfig::buffer_capacity));
        k.push_back(int_key("batch_size", &RunConfig::batch_size));
        k.push_back(int_key("target_sync_period", &RunConfig::target_sync_period));
        k.push_back(dbl_key("epsilon", &RunConfig::epsilon));
        k.push_back(dbl_key("discount", &RunConfig::discount));
        k.push_back(dbl_key("grad_clip_norm", &RunConfig::grad_clip_norm));
        k.push_back(int_key("horizon", &RunConfig::horizon));
        k.push_back(int_key("saturation", &RunConfig::saturation));
        k.push_back(int_key("switch_capacity", &RunConfig::switch_capacity));
        k.push_back(int_key("queue_cap", &RunConfig::queue_cap));
        k.push_back(dbl_key("queue_norm", &RunConfig::queue_norm));
        k.push_back(dbl_key("arrival_min", &RunConfig::arrival_min));
        k.push_back(dbl_key("arrival_max", &RunConfig::arrival_max));
        k.push_back(str_key("train_settings", &RunConfig::train_settings));
        k.push_back(str_key("test_settings", &RunConfig::test_settings));
        k.push_back(int_key("fixed_time_period", &RunConfig::fixed_time_period));
        k.push_back(str_key("net_hidden", &RunConfig::net_hidden));
        k.push_back(int_key("embed_dim", &RunConfig::embed_dim));
        k.push_back(str_key("score_hidden", &RunConfig::score_hidden));
        k.push_back(str_key("activation", &RunConfig::activation));
        std::sort(k.begin(), k.end(),
                  [](const KeyDef& a, const KeyDef& b) { return a.name < b.name; });
        return k;
    }();
    return keys;
}

const KeyDef* find_key(std::string_view name) {
    const auto& keys = key_registry();
    const auto it = std::lower_bound(keys.begin(), keys.end(), name,
                                     [](const KeyDef& k, std::string_view n) {
                                         return std::string_view(k.name) < n;
                                     });
    if (it == keys.end() || std::string_view(it->name) != name)
        return nullptr;
    return &*it;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace

std::string to_string(Experiment e) {
    return e == Experiment::Nav2d ? "nav2d" : "traffic";
}

std::string to_string(RunVariant v) {
    switch (v) {
    case RunVariant::BmDqn:
        return "bm_dqn";
    case RunVariant::GemBmlDirect:
        return "gem_bml_direct";
    case RunVariant::PointReptile:
        return "point_reptile";
    case RunVariant::RandomInit:
        return "random_init";
    case RunVariant::FixedTime:
        return "fixed_time";
    }
    return "bm_dqn";
}

Experiment parse_experiment(std::string_view text) {
    if (text == "nav2d")
        return Experiment::Nav2d;
    if (text == "traffic")
        return Experiment::Traffic;
    throw UsageError("unknown experiment '" + std::string(text) +
                     "' (expected nav2d or traffic)");
}

RunVariant parse_variant(std::string_view text) {
    if (text == "bm_dqn")
        return RunVariant::BmDqn;
    if (text == "gem_bml_direct")
        return RunVariant::GemBmlDirect;
    if (text == "point_reptile")
        return RunVariant::PointReptile;
    if (text == "random_init")
        return RunVariant::RandomInit;
    if (text == "fixed_time")
        return RunVariant::FixedTime;
    throw UsageError("unknown variant '" + std::string(text) +
                     "' (expected bm_dqn, gem_bml_direct, point_reptile, random_init or "
                     "fixed_time)");
}

RunConfig default_config(Experiment experiment) {
    RunConfig cfg;
    cfg.experiment = experiment;
    if (experiment == Experiment::Traffic) {
        cfg.alpha = 0.001;
        cfg.meta_batch_size = 30;
        cfg.inner_steps_test = 3;
        cfg.horizon = 360;
        cfg.discount = 0.8;
        cfg.n_test_tasks = 10;
    }
    return cfg;
}

void apply_kv(RunConfig& cfg, std::string_view key, std::string_view value) {
    const KeyDef* def = find_key(key);
    if (!def)
        throw UsageError("unknown configuration key '" + std::string(key) + "'");
    def->set(cfg, value);
}

std::vector<KeyValue> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open config file: " + path);
    std::vector<KeyValue> pairs;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view stripped = trim(line);
        if (const std::size_t hash = stripped.find('#'); hash != std::string_view::npos)
            stripped = trim(stripped.substr(0, hash));
        if (stripped.empty())
            continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string_view::npos)
            throw UsageError(path + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
        pairs.emplace_back(std::string(trim(stripped.substr(0, eq))),
                           std::string(trim(stripped.substr(eq + 1))));
    }
    return pairs;
}

RunConfig resolve_config(const std::optional<std::string>& config_file,
                         const std::vector<KeyValue>& overrides) {
    std::vector<KeyValue> file_pairs;
    if (config_file)
        file_pairs = parse_config_file(*config_file);

    // the experiment key decides which defaults apply, so find it first
    Experiment experiment = Experiment::Nav2d;
    for (const auto& [key, value] : file_pairs)
        if (key == "experiment")
            experiment = parse_experiment(value);
    for (const auto& [key, value] : overrides)
        if (key == "experiment")
            experiment = parse_experiment(value);

    RunConfig cfg = default_config(experiment);
    for (const auto& [key, value] : file_pairs)
        apply_kv(cfg, key, value);
    for (const auto& [key, value] : overrides)
        apply_kv(cfg, key, value);
    return cfg;
}

std::string effective_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    for (const KeyDef& key : key_registry())
        os << key.name << " = " << key.get(cfg) << "\n";
    return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    return fnv1a64(effective_config_text(cfg));
}

std::string resolved_run_id(const RunConfig& cfg) {
    if (!cfg.run_id.empty())
        return cfg.run_id;
    return to_string(cfg.experiment) + "-" + to_string(cfg.variant) + "-s" +
           std::to_string(cfg.seed);
}

std::vector<int> parse_int_list(std::string_view text) {
    std::vector<int> out;
    for (const std::string& tok : parse_name_list(text))
        out.push_back(static_cast<int>(parse_integer("list", tok)));
    return out;
}

std::vector<std::string> parse_name_list(std::string_view text) {
    std::vector<std::string> out;
    if (trim(text).empty())
        return out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string_view tok =
            trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                  : comma - pos));
        if (tok.empty())
            throw UsageError("list: empty element in '" + std::string(text) + "'");
        out.push_back(std::string(tok));
        if (comma == std::string_view::npos)
            break;
        pos = comma + 1;
    }
    return out;
}

} // namespace bmdqn::cli
