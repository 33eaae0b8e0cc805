#include "markovtype/reports.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "markovtype/io.hpp"

namespace markovtype {

namespace {

const std::string kPlusMinus = "\xC2\xB1";  // U+00B1

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty() && sep == ';') return out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double x = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw LoadError(what + ": '" + s + "' is not a number");
  return x;
}

long long parse_int(const std::string& s, const std::string& what) {
  long long x = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw LoadError(what + ": '" + s + "' is not an integer");
  return x;
}

unsigned long long parse_uint(const std::string& s, const std::string& what) {
  unsigned long long x = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw LoadError(what + ": '" + s + "' is not an integer");
  return x;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& values, Format&& format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += format(values[i]);
  }
  return out;
}

// Rows of a CSV file after checking its header; each row has `columns` cells.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw LoadError(path.string() + ": unexpected header (expected '" + header + "')");
  }
  const std::size_t columns = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != columns) {
      throw LoadError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(columns));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

using GroupKey = std::pair<std::string, std::string>;

std::map<GroupKey, std::vector<const SeedReport*>> group(const std::vector<SeedReport>& reports) {
  std::map<GroupKey, std::vector<const SeedReport*>> groups;
  for (const auto& r : reports) groups[{r.method, r.discount}].push_back(&r);
  for (auto& [key, members] : groups) {
    std::stable_sort(members.begin(), members.end(),
                     [](const SeedReport* a, const SeedReport* b) { return a->seed < b->seed; });
    for (const SeedReport* m : members) {
      if (m->correct_at.size() != members[0]->correct_at.size() || m->sweep.size() != members[0]->sweep.size() ||
          m->incorrect_at.size() != m->correct_at.size() || (m->trials == 0) != (members[0]->trials == 0)) {
        throw DimensionError("reports for " + method_label(key.first, key.second) + " differ in sequence count");
      }
    }
  }
  return groups;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

std::string method_label(const std::string& method, const std::string& discount) {
  if (method == "rb1d") return method;
  return method + "-" + discount;
}

SeedReport make_seed_report(const std::string& method, const std::string& discount, std::uint64_t seed,
                            Index num_params, const SessionResult& session, const std::vector<double>& sweep) {
  SeedReport r;
  r.method = method;
  r.discount = method == "rb1d" ? "none" : discount;
  r.seed = seed;
  r.num_params = num_params;
  r.trials = static_cast<int>(session.trials.size());
  r.itr_selection = session.itr_selection;
  r.accuracy = session.accuracy;
  r.n_tau = session.n_tau;
  r.itr_sequence = session.itr_sequence;
  r.correct_at = session.correct_at;
  r.incorrect_at = session.incorrect_at;
  r.sweep = sweep;
  return r;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("mean_std: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::string format_mean_std(const MeanStd& v) { return format_double(v.mean) + kPlusMinus + format_double(v.std); }

MeanStd parse_mean_std(const std::string& cell) {
  const auto pos = cell.find(kPlusMinus);
  if (pos == std::string::npos) throw LoadError("'" + cell + "' is not a mean" + kPlusMinus + "std cell");
  return {parse_double(cell.substr(0, pos), "mean"), parse_double(cell.substr(pos + kPlusMinus.size()), "std")};
}

std::vector<SummaryRow> summarize(const std::vector<SeedReport>& reports) {
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : group(reports)) {
    if (members[0]->trials == 0) continue;  // sweep-only evaluation
    std::vector<double> itr_sel, acc, n_tau, itr_seq;
    for (const SeedReport* m : members) {
      itr_sel.push_back(m->itr_selection);
      acc.push_back(m->accuracy);
      n_tau.push_back(m->n_tau);
      itr_seq.push_back(m->itr_sequence);
    }
    rows.push_back({key.first, key.second, members[0]->num_params, mean_std(itr_sel), mean_std(acc), mean_std(n_tau),
                    mean_std(itr_seq)});
  }
  return rows;
}

std::vector<HistogramRow> histogram_rows(const std::vector<SeedReport>& reports) {
  std::vector<HistogramRow> rows;
  for (const auto& [key, members] : group(reports)) {
    const std::string label = method_label(key.first, key.second);
    for (std::size_t n = 0; n < members[0]->correct_at.size(); ++n) {
      HistogramRow row{label, static_cast<int>(n + 1), 0, 0};
      for (const SeedReport* m : members) {
        row.correct_count += m->correct_at[n];
        row.incorrect_count += m->incorrect_at[n];
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_rows(const std::vector<SeedReport>& reports) {
  std::vector<SweepRow> rows;
  for (const auto& [key, members] : group(reports)) {
    const std::string label = method_label(key.first, key.second);
    for (std::size_t n = 0; n < members[0]->sweep.size(); ++n) {
      std::vector<double> acc;
      for (const SeedReport* m : members) acc.push_back(m->sweep[n]);
      const MeanStd s = mean_std(acc);
      rows.push_back({label, static_cast<int>(n + 1), s.mean, s.std});
    }
  }
  return rows;
}

void export_reports(const std::vector<SeedReport>& reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory '" + dir.string() + "': " + ec.message());

  std::vector<const SeedReport*> ordered;
  for (const auto& [key, members] : group(reports)) ordered.insert(ordered.end(), members.begin(), members.end());

  std::string seeds = std::string(kSeedsHeader) + "\n";
  for (const SeedReport* r : ordered) {
    seeds += r->method + "," + r->discount + "," + std::to_string(r->seed) + "," + std::to_string(r->num_params) + "," +
             std::to_string(r->trials) + "," + format_double(r->itr_selection) + "," + format_double(r->accuracy) +
             "," + format_double(r->n_tau) + "," + format_double(r->itr_sequence) + "," +
             join(r->correct_at, [](int x) { return std::to_string(x); }) + "," +
             join(r->incorrect_at, [](int x) { return std::to_string(x); }) + "," +
             join(r->sweep, [](double x) { return format_double(x); }) + "\n";
  }
  io::write_text(dir / "seeds.csv", seeds);

  std::string summary = std::string(kSummaryHeader) + "\n";
  for (const auto& row : summarize(reports)) {
    summary += row.method + "," + row.discount + "," + std::to_string(row.num_params) + "," +
               format_mean_std(row.itr_selection) + "," + format_mean_std(row.accuracy) + "," +
               format_mean_std(row.n_tau) + "," + format_mean_std(row.itr_sequence) + "\n";
  }
  io::write_text(dir / "summary.csv", summary);

  std::string histogram = std::string(kHistogramHeader) + "\n";
  for (const auto& row : histogram_rows(reports)) {
    histogram += row.method + "," + std::to_string(row.sequence) + "," + std::to_string(row.correct_count) + "," +
                 std::to_string(row.incorrect_count) + "\n";
  }
  io::write_text(dir / "histogram.csv", histogram);

  std::string sweep = std::string(kSweepHeader) + "\n";
  for (const auto& row : sweep_rows(reports)) {
    sweep += row.method + "," + std::to_string(row.sequence) + "," + format_double(row.mean_accuracy) + "," +
             format_double(row.std) + "\n";
  }
  io::write_text(dir / "sweep.csv", sweep);
}

std::vector<SeedReport> read_seed_reports(const std::filesystem::path& path) {
  std::vector<SeedReport> out;
  for (const auto& c : read_csv(path, kSeedsHeader)) {
    SeedReport r;
    r.method = c[0];
    r.discount = c[1];
    r.seed = parse_uint(c[2], "seed");
    r.num_params = static_cast<Index>(parse_int(c[3], "num_params"));
    r.trials = static_cast<int>(parse_int(c[4], "trials"));
    r.itr_selection = parse_double(c[5], "itr_selection");
    r.accuracy = parse_double(c[6], "accuracy");
    r.n_tau = parse_double(c[7], "n_tau");
    r.itr_sequence = parse_double(c[8], "itr_sequence");
    for (const auto& s : split(c[9], ';')) r.correct_at.push_back(static_cast<int>(parse_int(s, "correct_at")));
    for (const auto& s : split(c[10], ';')) r.incorrect_at.push_back(static_cast<int>(parse_int(s, "incorrect_at")));
    for (const auto& s : split(c[11], ';')) r.sweep.push_back(parse_double(s, "sweep"));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SummaryRow> read_summary(const std::filesystem::path& path) {
  std::vector<SummaryRow> out;
  for (const auto& c : read_csv(path, kSummaryHeader)) {
    out.push_back({c[0], c[1], static_cast<Index>(parse_int(c[2], "num_params")), parse_mean_std(c[3]),
                   parse_mean_std(c[4]), parse_mean_std(c[5]), parse_mean_std(c[6])});
  }
  return out;
}

std::vector<HistogramRow> read_histogram(const std::filesystem::path& path) {
  std::vector<HistogramRow> out;
  for (const auto& c : read_csv(path, kHistogramHeader)) {
    out.push_back({c[0], static_cast<int>(parse_int(c[1], "sequence")), static_cast<long>(parse_int(c[2], "correct_count")),
                   static_cast<long>(parse_int(c[3], "incorrect_count"))});
  }
  return out;
}

std::vector<SweepRow> read_sweep(const std::filesystem::path& path) {
  std::vector<SweepRow> out;
  for (const auto& c : read_csv(path, kSweepHeader)) {
    out.push_back({c[0], static_cast<int>(parse_int(c[1], "sequence")), parse_double(c[2], "mean_accuracy"),
                   parse_double(c[3], "std")});
  }
  return out;
}

}  // namespace markovtype
