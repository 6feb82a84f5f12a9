#include "bmdqn/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace bmdqn::cli {

namespace {

constexpr const char* kMagic = "bmdqn-checkpoint";
constexpr int kVersion = 1;

void write_vector(std::ostream& out, const char* label, const std::vector<double>& values) {
    out << label << ' ' << values.size() << '\n';
    for (std::size_t i = 0; i < values.size(); ++i)
        out << (i ? " " : "") << std::hexfloat << values[i];
    out << '\n';
}

std::vector<double> read_vector(std::istream& in, const std::string& expected_label,
                                const std::string& path) {
    std::string label;
    std::size_t n = 0;
    if (!(in >> label >> n) || label != expected_label)
        throw std::runtime_error(path + ": expected section '" + expected_label + "'");
    std::vector<double> values(n);
    std::string token;
    for (double& v : values) {
        // parsed via strtod because stream extraction does not accept the
        // hexfloat format it was written in
        if (!(in >> token))
            throw std::runtime_error(path + ": truncated section '" + expected_label + "'");
        char* end = nullptr;
        v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size())
            throw std::runtime_error(path + ": malformed value in section '" + expected_label +
                                     "'");
    }
    return values;
}

} // namespace

void save_checkpoint(const std::string& path, const net::NetSpec& spec,
                     const meta::MetaState& state) {
    spec.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write checkpoint: " + path);
    out << kMagic << ' ' << kVersion << '\n';
    out << "spec " << spec.descriptor() << '\n';
    out << "spec_hash " << std::hex << spec.hash() << std::dec << '\n';
    write_vector(out, "mu_theta", state.theta_prior.mu);
    write_vector(out, "log_sigma_theta", state.theta_prior.log_sigma);
    write_vector(out, "mu_lambda", state.lambda_init.mu);
    write_vector(out, "log_sigma_lambda", state.lambda_init.log_sigma);
    out << "iteration " << state.iteration << '\n';
    if (!out)
        throw std::runtime_error("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open checkpoint: " + path);

    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic)
        throw std::runtime_error(path + ": not a checkpoint file");
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));

    std::string label;
    if (!(in >> label) || label != "spec")
        throw std::runtime_error(path + ": expected section 'spec'");
    std::string descriptor;
    std::getline(in, descriptor);
    if (!descriptor.empty() && descriptor.front() == ' ')
        descriptor.erase(descriptor.begin());

    Checkpoint ckpt;
    ckpt.spec = net::parse_descriptor(descriptor);

    std::uint64_t stored_hash = 0;
    if (!(in >> label >> std::hex >> stored_hash >> std::dec) || label != "spec_hash")
        throw std::runtime_error(path + ": expected section 'spec_hash'");
    if (stored_hash != ckpt.spec.hash()) {
        std::ostringstream msg;
        msg << path << ": spec hash mismatch (stored " << std::hex << stored_hash
            << ", descriptor hashes to " << ckpt.spec.hash() << ")";
        throw std::runtime_error(msg.str());
    }

    ckpt.state.theta_prior.mu = read_vector(in, "mu_theta", path);
    ckpt.state.theta_prior.log_sigma = read_vector(in, "log_sigma_theta", path);
    ckpt.state.lambda_init.mu = read_vector(in, "mu_lambda", path);
    ckpt.state.lambda_init.log_sigma = read_vector(in, "log_sigma_lambda", path);
    ckpt.state.theta_prior.spec_hash = stored_hash;
    ckpt.state.lambda_init.spec_hash = stored_hash;

    if (!(in >> label >> ckpt.state.iteration) || label != "iteration")
        throw std::runtime_error(path + ": expected section 'iteration'");

    const auto expected = static_cast<std::size_t>(net::param_count(ckpt.spec));
    for (const std::vector<double>* vec :
         {&ckpt.state.theta_prior.mu, &ckpt.state.theta_prior.log_sigma,
          &ckpt.state.lambda_init.mu, &ckpt.state.lambda_init.log_sigma})
        if (vec->size() != expected)
            throw std::runtime_error(path + ": parameter section length does not match spec");
    return ckpt;
}

} // namespace bmdqn::cli
