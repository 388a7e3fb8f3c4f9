#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alphabox/harness/data.hpp"
#include "alphabox/net.hpp"
#include "alphabox/objective.hpp"

namespace alphabox::harness {

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Layout: [u8 version][u32 LE header length][header JSON][u64 LE count][count x f64 LE].
/// The header holds the architecture, task, tau, training metadata and the
/// standardisation statistics needed to evaluate raw data.
struct Checkpoint {
    MlpArchitecture arch;
    ParameterSet params;
    Task task = Task::classification;
    double tau = 1.0;
    std::uint64_t config_hash = 0;
    std::uint64_t epoch = 0;
    std::uint64_t seed = 0;
    Standardizer standardizer;  // empty vectors when unused

    std::vector<std::uint8_t> serialise() const;
    static Checkpoint deserialise(const std::vector<std::uint8_t>& bytes);
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

} // namespace alphabox::harness
