#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/metrics/stats.hpp"

namespace shazam::metrics {

/// Higher-is-better metrics in the order they are tried as a task's primary metric.
inline const std::vector<std::string>& primary_metric_priority() {
  static const std::vector<std::string> p{"pcc", "c_index", "weighted_f1", "accuracy"};
  return p;
}

struct FixtureRow {
  std::string task_id;
  std::string model;
  std::string metric;
  double value = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
};

struct BenchmarkTable {
  std::string task_id;
  std::string primary_metric;
  std::vector<std::pair<std::string, double>> rows;
};

/// Task ids are "family/name"; the family groups tasks for paired tests.
inline std::string task_family(const std::string& task_id) {
  const auto slash = task_id.find('/');
  return slash == std::string::npos ? task_id : task_id.substr(0, slash);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidArgument, where + ": '" + s + "' is not a number");
  }
}

}  // namespace detail

inline std::vector<FixtureRow> parse_fixture_csv(const std::string& text, const std::string& source = "fixture") {
  std::vector<FixtureRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (!header) {
      require(f == std::vector<std::string>{"task_id", "model", "metric", "value", "ci_low", "ci_high"},
              ErrorKind::InvalidArgument, where + ": expected header task_id,model,metric,value,ci_low,ci_high");
      header = true;
      continue;
    }
    require(f.size() == 6, ErrorKind::InvalidArgument, where + ": expected 6 fields");
    require(!f[0].empty() && !f[1].empty() && !f[2].empty(), ErrorKind::InvalidArgument, where + ": empty key field");
    FixtureRow r{f[0], f[1], f[2], detail::parse_number(f[3], where), {}, {}};
    if (!f[4].empty()) r.ci_low = detail::parse_number(f[4], where);
    if (!f[5].empty()) r.ci_high = detail::parse_number(f[5], where);
    rows.push_back(std::move(r));
  }
  require(header, ErrorKind::InvalidArgument, source + ": no header");
  return rows;
}

/// Reads every *.csv in `dir` in file-name order.
inline std::vector<FixtureRow> load_fixture_dir(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::InvalidArgument, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::InvalidArgument, "no CSV tables in " + dir.string());
  std::vector<FixtureRow> rows;
  for (const auto& p : files) {
    std::ifstream in(p);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto part = parse_fixture_csv(ss.str(), p.filename().string());
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

/// One table per task in first-appearance order, on the first metric from the priority list the task reports.
inline std::vector<BenchmarkTable> build_tables(const std::vector<FixtureRow>& rows,
                                                const std::vector<std::string>& priority = primary_metric_priority()) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<const FixtureRow*>>> by_task;
  for (const FixtureRow& r : rows) {
    if (!by_task.count(r.task_id)) order.push_back(r.task_id);
    by_task[r.task_id][r.metric].push_back(&r);
  }
  std::vector<BenchmarkTable> tables;
  for (const std::string& task : order) {
    const auto& metrics = by_task[task];
    BenchmarkTable t{task, "", {}};
    for (const std::string& m : priority)
      if (metrics.count(m)) {
        t.primary_metric = m;
        break;
      }
    require(!t.primary_metric.empty(), ErrorKind::InvalidArgument, "task " + task + " has no rankable metric");
    std::set<std::string> seen;
    for (const FixtureRow* r : metrics.at(t.primary_metric)) {
      require(seen.insert(r->model).second, ErrorKind::InvalidArgument, "duplicate model " + r->model + " in " + task);
      t.rows.emplace_back(r->model, r->value);
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

struct TaskRanks {
  std::string task_id;
  std::string metric;
  std::map<std::string, double> rank;
};

struct ModelRank {
  std::string model;
  double mean_rank = 0.0;
  std::size_t firsts = 0;
  std::size_t tasks = 0;
};

struct RankAggregate {
  std::vector<TaskRanks> per_task;
  std::vector<ModelRank> models;  // in first-appearance order
};

/// Rank 1 = best (highest) value, ties share the mean rank. Every table must list every model.
inline RankAggregate rank_aggregate(const std::vector<BenchmarkTable>& tables) {
  require(!tables.empty(), ErrorKind::InvalidArgument, "rank_aggregate over no tables");
  std::vector<std::string> models;
  for (const auto& [m, v] : tables.front().rows) models.push_back(m);
  RankAggregate out;
  std::map<std::string, double> sum;
  std::map<std::string, std::size_t> firsts;
  for (const BenchmarkTable& t : tables) {
    require(t.rows.size() == models.size(), ErrorKind::InvalidArgument, "task " + t.task_id + " has a different model set");
    std::vector<double> neg;
    for (const std::string& m : models) {
      auto it = std::find_if(t.rows.begin(), t.rows.end(), [&](const auto& r) { return r.first == m; });
      require(it != t.rows.end(), ErrorKind::InvalidArgument, "task " + t.task_id + " lacks model " + m);
      neg.push_back(-it->second);
    }
    const auto ranks = average_ranks(neg);
    TaskRanks tr{t.task_id, t.primary_metric, {}};
    for (std::size_t k = 0; k < models.size(); ++k) {
      tr.rank[models[k]] = ranks[k];
      sum[models[k]] += ranks[k];
      if (ranks[k] == 1.0) ++firsts[models[k]];
    }
    out.per_task.push_back(std::move(tr));
  }
  for (const std::string& m : models)
    out.models.push_back({m, sum[m] / static_cast<double>(tables.size()), firsts[m], tables.size()});
  return out;
}

}  // namespace shazam::metrics
