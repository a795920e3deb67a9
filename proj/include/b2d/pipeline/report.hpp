#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "b2d/pipeline/ablation.hpp"
#include "b2d/pipeline/benchmark.hpp"
#include "b2d/pipeline/training.hpp"

namespace b2d {

// Run reports: one "epoch" row per epoch and one "summary" row per fold.
// Wall-clock values are kept out so the file is reproducible.
std::string report_csv(const std::vector<RunReport>& reports);

// fold,train_s,test_s,n_test,test_ms_per_sample with exact decimal times.
std::string timing_csv(const std::vector<RunReport>& reports);

std::string ablation_csv(const std::vector<AblationRow>& rows);

std::string benchmark_csv(const BenchmarkResult& res);

std::string confusion_text(const Confusion& c);

// Exact decimal forms: seconds with 9 fraction digits, milliseconds with 6.
std::string ns_as_seconds(std::int64_t ns);
std::string ns_as_milliseconds(std::int64_t ns);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace b2d
