#pragma once

// Shared fixtures and hand-rolled generators for the test binaries.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "slimtsf/slimtsf.hpp"

namespace testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("slimtsf-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Independent engine so generators never share state with the library RNG.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : engine_(seed) {}

    std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline slimtsf::TimeSeriesInstance make_instance(std::string id, std::vector<std::string> params, std::size_t t,
                                                  std::vector<double> values, slimtsf::BinaryLabel label,
                                                  std::string partition = "P1") {
    slimtsf::TimeSeriesInstance inst;
    inst.instance_id = std::move(id);
    inst.partition_id = std::move(partition);
    inst.parameter_names = std::move(params);
    for (std::size_t i = 0; i < t; ++i) inst.timestamps.push_back(slimtsf::format_utc_seconds(1262304000 + 720 * static_cast<std::int64_t>(i)));
    inst.start_ts = inst.timestamps.front();
    inst.end_ts = inst.timestamps.back();
    inst.values = std::move(values);
    inst.label = label;
    inst.raw_label = label == slimtsf::BinaryLabel::Flaring ? slimtsf::FlareLabel{slimtsf::FlareClass::M, 1.0}
                                                            : slimtsf::FlareLabel{slimtsf::FlareClass::C, 1.0};
    return inst;
}

/// Feature matrix with arbitrary content, for forest-level tests.
inline slimtsf::FeatureMatrix make_matrix(std::size_t rows, std::size_t cols, const std::vector<double>& values,
                                          const std::vector<slimtsf::BinaryLabel>& labels) {
    slimtsf::FeatureMatrix fm;
    for (std::size_t j = 0; j < cols; ++j) {
        slimtsf::FeatureDescriptor d;
        d.parameter_name = "f" + std::to_string(j);
        d.scale = {2, 1};
        d.interval_index = 0;
        fm.descriptors.push_back(d);
    }
    for (std::size_t i = 0; i < rows; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "r%04zu", i);
        fm.instance_ids.push_back(id);
    }
    fm.labels = labels;
    fm.values = values;
    return fm;
}

} // namespace testing
