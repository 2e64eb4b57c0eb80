#include "ncsac/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <random>
#include <string>
#include <thread>

#include "ncsac/error.hpp"
#include "ncsac/extractor.hpp"

namespace ncsac {

namespace {

double entropy2(double a, double total) {
  double h = 0.0;
  for (double c : {a, total - a}) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

std::vector<std::uint8_t> membership(std::span<const NodeId> nodes,
                                     std::size_t n, const char* what) {
  if (nodes.empty()) {
    throw MetricError(std::string(what) + " community is empty");
  }
  std::vector<std::uint8_t> in(n, 0);
  for (NodeId u : nodes) {
    if (u >= n) {
      throw MetricError(std::string(what) + " node " + std::to_string(u) +
                        " is outside 0.." + std::to_string(n - 1));
    }
    in[u] = 1;
  }
  return in;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - since)
      .count();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

CommunityScore score_community(std::span<const NodeId> pred,
                               std::span<const NodeId> truth, std::size_t n) {
  const auto in_pred = membership(pred, n, "predicted");
  const auto in_truth = membership(truth, n, "truth");
  double a = 0, b = 0, both = 0;
  for (std::size_t u = 0; u < n; ++u) {
    a += in_pred[u];
    b += in_truth[u];
    both += in_pred[u] & in_truth[u];
  }
  CommunityScore s;
  if (both > 0) {
    const double p = both / a;
    const double r = both / b;
    s.f1 = 2 * p * r / (p + r);
  }
  s.jac = both / (a + b - both);

  if (in_pred == in_truth) {
    s.nmi = 1.0;
    return s;
  }
  const double total = static_cast<double>(n);
  const double hx = entropy2(a, total);
  const double hy = entropy2(b, total);
  if (hx == 0.0 || hy == 0.0) return s;
  const double cells[2][2] = {{both, a - both}, {b - both, total - a - b + both}};
  const double rows[2] = {a, total - a};
  const double cols[2] = {b, total - b};
  double mi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (cells[i][j] > 0) {
        mi += cells[i][j] / total *
              std::log(cells[i][j] * total / (rows[i] * cols[j]));
      }
    }
  }
  s.nmi = std::clamp(mi / (0.5 * (hx + hy)), 0.0, 1.0);
  return s;
}

QueryOutcome run_query(const RefineContext& ctx, const PolicyModel& policy,
                       NodeId q, const RefineConfig& cfg) {
  QueryOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  ExtractionResult coarse = extract_candidate(ctx.graph, q, cfg.beta, cfg.max_hop);
  out.extract_ms = elapsed_ms(t0);
  out.coarse = std::move(coarse.community);
  out.coarse_phi = coarse.phi;
  t0 = std::chrono::steady_clock::now();
  out.refined = refine(ctx, out.coarse, q, policy, cfg);
  out.refine_ms = elapsed_ms(t0);
  return out;
}

MetricSummary summarize_mean(std::span<const EvalRecord> records) {
  MetricSummary m;
  if (records.empty()) return m;
  for (const EvalRecord& r : records) {
    m.f1 += r.score.f1;
    m.nmi += r.score.nmi;
    m.jac += r.score.jac;
    m.coarse_f1 += r.coarse_f1;
  }
  const double k = static_cast<double>(records.size());
  m.f1 /= k;
  m.nmi /= k;
  m.jac /= k;
  m.coarse_f1 /= k;
  return m;
}

MetricSummary summarize_median(std::span<const EvalRecord> records) {
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const EvalRecord& r : records) v.push_back(get(r));
    return median_of(std::move(v));
  };
  MetricSummary m;
  m.f1 = column([](const EvalRecord& r) { return r.score.f1; });
  m.nmi = column([](const EvalRecord& r) { return r.score.nmi; });
  m.jac = column([](const EvalRecord& r) { return r.score.jac; });
  m.coarse_f1 = column([](const EvalRecord& r) { return r.coarse_f1; });
  return m;
}

EvalReport evaluate(const RefineContext& ctx, const PolicyModel& policy,
                    const CommunitySet& test, const RefineConfig& cfg,
                    std::uint64_t seed, std::size_t jobs) {
  if (test.empty()) throw ConfigError("evaluation needs at least one test community");
  cfg.validate();
  const std::size_t n = ctx.graph.num_nodes();

  EvalReport report;
  report.records.resize(test.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].empty()) throw ConfigError("test community " + std::to_string(i) + " is empty");
    std::uniform_int_distribution<std::size_t> pick(0, test[i].size() - 1);
    report.records[i].community = i;
    report.records[i].query = test[i][pick(rng)];
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < test.size(); i = next++) {
      try {
        EvalRecord& rec = report.records[i];
        const QueryOutcome out = run_query(ctx, policy, rec.query, cfg);
        rec.truth_size = test[i].size();
        rec.pred_size = out.refined.size();
        rec.score = score_community(out.refined, test[i], n);
        rec.coarse_f1 = score_community(out.coarse, test[i], n).f1;
        rec.extract_ms = out.extract_ms;
        rec.refine_ms = out.refine_ms;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, test.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  report.mean = summarize_mean(report.records);
  report.median = summarize_median(report.records);
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  for (const EvalRecord& r : report.records) {
    out << "record community=" << r.community << " query=" << r.query
        << " truth_size=" << r.truth_size << " pred_size=" << r.pred_size
        << " f1=" << fmt(r.score.f1) << " nmi=" << fmt(r.score.nmi)
        << " jac=" << fmt(r.score.jac) << " coarse_f1=" << fmt(r.coarse_f1)
        << " wall_extract_ms=" << fmt(r.extract_ms)
        << " wall_refine_ms=" << fmt(r.refine_ms) << '\n';
  }
  for (auto [name, m] : {std::pair{"mean", report.mean},
                         std::pair{"median", report.median}}) {
    out << "aggregate stat=" << name << " count=" << report.count()
        << " f1=" << fmt(m.f1) << " nmi=" << fmt(m.nmi) << " jac=" << fmt(m.jac)
        << " coarse_f1=" << fmt(m.coarse_f1) << '\n';
  }
}

void write_summary_table(const EvalReport& report, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %10s\n", "stat", "F1",
                "NMI", "JAC", "coarse F1");
  out << line;
  for (auto [name, m] : {std::pair{"mean", report.mean},
                         std::pair{"median", report.median}}) {
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %10.4f\n", name,
                  m.f1, m.nmi, m.jac, m.coarse_f1);
    out << line;
  }
  out << "queries: " << report.count() << '\n';
}

}  // namespace ncsac
