#pragma once

// CSV exports of evaluation results. seeds.csv keeps one raw row per
// (method, discount, seed) so reports from several runs can be merged;
// summary.csv, histogram.csv and sweep.csv aggregate over seeds.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "markovtype/eval.hpp"

namespace markovtype {

struct SeedReport {
  std::string method;    // "markovtype" or "rb1d"
  std::string discount;  // discount name, "none" for rb1d
  std::uint64_t seed = 0;
  Index num_params = 0;
  int trials = 0;  // 0 when only the sweep was run
  double itr_selection = 0.0;
  double accuracy = 0.0;
  double n_tau = 0.0;
  double itr_sequence = 0.0;
  std::vector<int> correct_at;    // per sequence, threshold session; empty without one
  std::vector<int> incorrect_at;  // per sequence, threshold session; empty without one
  std::vector<double> sweep;      // no-threshold accuracy per sequence; empty without a sweep

  friend bool operator==(const SeedReport&, const SeedReport&) = default;
};

// "markovtype-<discount>" or "rb1d".
std::string method_label(const std::string& method, const std::string& discount);

SeedReport make_seed_report(const std::string& method, const std::string& discount, std::uint64_t seed,
                            Index num_params, const SessionResult& session, const std::vector<double>& sweep);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

MeanStd mean_std(const std::vector<double>& values);

// "mean±std" with round-trip precision, and its inverse.
std::string format_mean_std(const MeanStd& v);
MeanStd parse_mean_std(const std::string& cell);

struct SummaryRow {
  std::string method;
  std::string discount;
  Index num_params = 0;
  MeanStd itr_selection, accuracy, n_tau, itr_sequence;
  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct HistogramRow {
  std::string method;  // label
  int sequence = 0;    // 1-based
  long correct_count = 0;
  long incorrect_count = 0;
  friend bool operator==(const HistogramRow&, const HistogramRow&) = default;
};

struct SweepRow {
  std::string method;  // label
  int sequence = 0;    // 1-based
  double mean_accuracy = 0.0;
  double std = 0.0;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Aggregates sorted by (method, discount); one group per distinct pair.
std::vector<SummaryRow> summarize(const std::vector<SeedReport>& reports);
std::vector<HistogramRow> histogram_rows(const std::vector<SeedReport>& reports);
std::vector<SweepRow> sweep_rows(const std::vector<SeedReport>& reports);

/// Writes seeds.csv, summary.csv, histogram.csv and sweep.csv into `dir`.
void export_reports(const std::vector<SeedReport>& reports, const std::filesystem::path& dir);

std::vector<SeedReport> read_seed_reports(const std::filesystem::path& path);
std::vector<SummaryRow> read_summary(const std::filesystem::path& path);
std::vector<HistogramRow> read_histogram(const std::filesystem::path& path);
std::vector<SweepRow> read_sweep(const std::filesystem::path& path);

inline constexpr const char* kSeedsHeader =
    "method,discount,seed,num_params,trials,itr_selection,accuracy,n_tau,itr_sequence,correct_at,incorrect_at,sweep";
inline constexpr const char* kSummaryHeader = "method,discount,num_params,itr_selection,accuracy,n_tau,itr_sequence";
inline constexpr const char* kHistogramHeader = "method,sequence,correct_count,incorrect_count";
inline constexpr const char* kSweepHeader = "method,sequence,mean_accuracy,std";
inline constexpr const char* kHistoryHeader = "epoch,train_loss,val_accuracy,learning_rate";

// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

}  // namespace markovtype
