#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ncsac/io.hpp"
#include "ncsac/refiner.hpp"

namespace ncsac {

struct CommunityScore {
  double f1 = 0.0;
  double nmi = 0.0;
  double jac = 0.0;
};

/// F1, NMI and Jaccard of a predicted community against the truth. NMI is
/// taken between the two-block partitions {C, V \ C}, natural log,
/// normalized by the mean of the two entropies.
CommunityScore score_community(std::span<const NodeId> pred,
                               std::span<const NodeId> truth, std::size_t n);

struct QueryOutcome {
  Community coarse;
  Community refined;
  double coarse_phi = 1.0;
  double extract_ms = 0.0;
  double refine_ms = 0.0;
};

/// Extraction followed by refinement for a single query node.
QueryOutcome run_query(const RefineContext& ctx, const PolicyModel& policy,
                       NodeId q, const RefineConfig& cfg);

struct EvalRecord {
  std::size_t community = 0;
  NodeId query = 0;
  std::size_t truth_size = 0;
  std::size_t pred_size = 0;
  CommunityScore score;
  double coarse_f1 = 0.0;
  double extract_ms = 0.0;
  double refine_ms = 0.0;
};

struct MetricSummary {
  double f1 = 0.0;
  double nmi = 0.0;
  double jac = 0.0;
  double coarse_f1 = 0.0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  MetricSummary mean;
  MetricSummary median;

  std::size_t count() const { return records.size(); }
};

/// One seeded query per test community; records keep the order of `test`
/// whatever the number of worker threads.
EvalReport evaluate(const RefineContext& ctx, const PolicyModel& policy,
                    const CommunitySet& test, const RefineConfig& cfg,
                    std::uint64_t seed, std::size_t jobs = 1);

MetricSummary summarize_mean(std::span<const EvalRecord> records);
MetricSummary summarize_median(std::span<const EvalRecord> records);

/// key=value lines, one per record and one per aggregate. Fields named
/// wall_* carry timings and are the only nondeterministic part.
void write_report(const EvalReport& report, std::ostream& out);
void write_summary_table(const EvalReport& report, std::ostream& out);

}  // namespace ncsac
