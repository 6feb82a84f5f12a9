#pragma once

#include "bmdqn/meta.hpp"
#include "bmdqn/netcore.hpp"

#include <string>

namespace bmdqn::cli {

struct Checkpoint {
    net::NetSpec spec;
    meta::MetaState state;
};

/// Versioned text format, one section per line group:
///   bmdqn-checkpoint 1
///   spec <descriptor>
///   spec_hash <hex>
///   mu_theta <n> followed by n hexfloats, then log_sigma_theta, mu_lambda,
///   log_sigma_lambda in the same shape, and finally iteration <t>.
/// Hexfloat serialization keeps reloaded states bit-identical.
void save_checkpoint(const std::string& path, const net::NetSpec& spec,
                     const meta::MetaState& state);

/// Throws std::runtime_error on malformed files and on spec-hash mismatches
/// (the message names both the stored and the recomputed hash).
Checkpoint load_checkpoint(const std::string& path);

} // namespace bmdqn::cli
