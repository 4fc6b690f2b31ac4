#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace druid {

using Rng = std::mt19937_64;

/// Named random streams derived from one master seed.
///
/// Every stream is seeded with splitmix64(master ^ fnv1a(name) + index), so two
/// streams never share state and each agent's mini-batch stream is independent
/// of the participation stream.  The derivation is stable across runs and
/// platforms (std::mt19937_64 is fully specified).
class SeedStreams {
public:
    explicit SeedStreams(std::uint64_t master) : master_(master) {}

    std::uint64_t master() const { return master_; }

    std::uint64_t derive(std::string_view name, std::uint64_t index = 0) const;
    Rng make(std::string_view name, std::uint64_t index = 0) const { return Rng(derive(name, index)); }

    Rng graph() const { return make("graph"); }
    Rng partition() const { return make("partition"); }
    Rng participation() const { return make("participation"); }
    Rng batches(std::size_t agent) const { return make("batch", agent); }
    Rng load_profile() const { return make("load-profile"); }

private:
    std::uint64_t master_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace druid
