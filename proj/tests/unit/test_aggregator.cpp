#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stubs.hpp"
#include "saap/aggregator.hpp"

namespace saap {
namespace {

namespace oracle = testing::oracle;
using json = nlohmann::json;

constexpr double kTol = 1e-9;

std::map<std::string, double> values_of(const std::vector<StoredRecord>& records,
                                        const std::string& field) {
  std::map<std::string, double> out;
  for (const auto& r : records) out[r.record_id.str()] = *numeric_field(r.record, field);
  return out;
}

void expect_matches_oracle(const std::vector<StoredRecord>& records, const std::string& field) {
  const auto got = deviation_rank(records, field);
  auto expected = oracle::deviation_rank(values_of(records, field));
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].record_id.str(), expected[i].id) << field << " #" << i;
    EXPECT_EQ(got[i].rank, expected[i].rank);
    EXPECT_NEAR(got[i].score, expected[i].score, kTol);
    EXPECT_EQ(got[i].value, expected[i].value);
  }
}

std::vector<StoredRecord> with_values(const std::vector<double>& bias,
                                      const std::vector<std::string>& jurisdictions = {"UK"}) {
  std::vector<AnalysisRecord> recs;
  for (std::size_t i = 0; i < bias.size(); ++i) {
    auto r = testing::sample_records()[i % 25];
    r.bias_level = bias[i];
    recs.push_back(r);
  }
  return testing::as_stored(recs, jurisdictions);
}

TEST(DeviationRank, SampleOutlierRanksFirst) {
  const auto records = testing::as_stored(testing::sample_records());
  const auto ranking = deviation_rank(records, "biasLevel");
  ASSERT_EQ(ranking.size(), 25u);
  EXPECT_EQ(ranking[0].value, 4.5);
  EXPECT_EQ(ranking[0].rank, 1);
  expect_matches_oracle(records, "biasLevel");
}

TEST(DeviationRank, SampleValuesMatchOracleForEveryNumericField) {
  const auto records = testing::as_stored(testing::sample_records_extended());
  for (const auto name : core_numeric_fields()) expect_matches_oracle(records, std::string(name));
}

TEST(DeviationRank, ConstantFieldScoresZeroRanksById) {
  const auto records = with_values(std::vector<double>(6, 2.5));
  const auto ranking = deviation_rank(records, "biasLevel");
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    EXPECT_EQ(ranking[i].score, 0);
    EXPECT_EQ(ranking[i].rank, static_cast<int>(i + 1));
    EXPECT_EQ(ranking[i].record_id, records[i].record_id);
  }
}

TEST(DeviationRank, Preconditions) {
  EXPECT_THROW(deviation_rank(with_values({1, 2}), "biasLevel"), InsufficientData);
  EXPECT_THROW(deviation_rank(with_values({1, 2, 3}), "context"), TypeError);
  EXPECT_THROW(deviation_rank(with_values({1, 2, 3}), "noSuchField"), TypeError);
}

TEST(DeviationRank, PropertyRandomFixturesMatchOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(3, 50);
  std::uniform_int_distribution<int> tenth(0, 100);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(size(rng));
    // Coarse values produce ties and zero-MAD cases often.
    const int spread = trial % 4 == 0 ? 3 : 100;
    for (auto& x : v) x = (tenth(rng) % spread) / 10.0;
    expect_matches_oracle(with_values(v), "biasLevel");
  }
}

TEST(DeviationRank, PropertyPermutationInvariant) {
  std::mt19937_64 rng(12);
  auto records = testing::as_stored(testing::sample_records_extended());
  const auto base = deviation_rank(records, "clarityScore");
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(records.begin(), records.end(), rng);
    const auto again = deviation_rank(records, "clarityScore");
    ASSERT_EQ(again.size(), base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_EQ(again[i].record_id, base[i].record_id);
      EXPECT_EQ(again[i].score, base[i].score);
    }
  }
}

TEST(DeviationRank, PropertyScalingKeepsOrder) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> val(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(5 + trial % 30);
    for (auto& x : v) x = val(rng);
    const double k = 1 + 9 * val(rng);
    std::vector<double> scaled;
    for (double x : v) scaled.push_back(x * k);
    const auto a = deviation_rank(with_values(v), "biasLevel");
    const auto b = deviation_rank(with_values(scaled), "biasLevel");
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].record_id, b[i].record_id) << "trial " << trial;
      EXPECT_NEAR(a[i].score, b[i].score, 1e-6);
    }
  }
}

TEST(DeviationRank, RanksArePermutationAndScoresDescend) {
  const auto ranking = deviation_rank(testing::as_stored(testing::sample_records_extended()), "levelOfSarcasm");
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    EXPECT_EQ(ranking[i].rank, static_cast<int>(i + 1));
    EXPECT_GE(ranking[i].score, 0);
    if (i) EXPECT_GE(ranking[i - 1].score, ranking[i].score);
  }
}

TEST(Describe, MatchesOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> val(0, 10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 50);
    for (auto& x : v) x = val(rng);
    const auto s = describe(v);
    EXPECT_EQ(s.n, v.size());
    EXPECT_NEAR(s.mean, oracle::mean(v), kTol);
    EXPECT_NEAR(s.median, oracle::median(v), kTol);
    EXPECT_NEAR(s.mad, oracle::mad(v), kTol);
    const auto sorted = oracle::sorted(v);
    EXPECT_EQ(s.min, sorted.front());
    EXPECT_EQ(s.max, sorted.back());
    EXPECT_LE(s.min, s.median);
    EXPECT_LE(s.median, s.max);
  }
}

TEST(Cohorts, TwoJurisdictionsPartitionTheRecords) {
  const auto records = testing::as_stored(testing::sample_records(), {"UK", "US"});
  const auto groups = cohort_stats(records, "jurisdiction");
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].group_value, "UK");
  EXPECT_EQ(groups[0].n + groups[1].n, 25u);
  EXPECT_EQ(groups[0].n, 13u);
  for (const auto& g : groups) {
    for (const auto name : core_numeric_fields()) {
      std::vector<double> v;
      for (const auto& r : records) {
        if (r.jurisdiction == g.group_value) v.push_back(*numeric_field(r.record, std::string(name)));
      }
      const auto& s = g.fields.at(std::string(name));
      EXPECT_NEAR(s.mean, oracle::mean(v), kTol) << name;
      EXPECT_NEAR(s.median, oracle::median(v), kTol) << name;
      EXPECT_NEAR(s.mad, oracle::mad(v), kTol) << name;
    }
  }
}

TEST(Cohorts, SingleRecord) {
  const auto groups = cohort_stats(with_values({3.7}), "jurisdiction");
  ASSERT_EQ(groups.size(), 1u);
  const auto& s = groups[0].fields.at("biasLevel");
  EXPECT_EQ(s.n, 1u);
  EXPECT_EQ(s.mean, 3.7);
  EXPECT_EQ(s.median, 3.7);
  EXPECT_EQ(s.mad, 0);
}

TEST(Cohorts, KeysAndErrors) {
  const auto records = testing::as_stored(testing::sample_records());
  EXPECT_EQ(cohort_stats(records, "docId").size(), 25u);
  EXPECT_EQ(cohort_stats(records, "runId").size(), 1u);
  EXPECT_EQ(cohort_stats(records, "language").size(), 1u);
  EXPECT_THROW(cohort_stats(records, "weather"), KeyError);
  EXPECT_THROW(cohort_stats(std::vector<StoredRecord>{}, "jurisdiction"), PreconditionError);
}

TEST(CrossBorder, EqualMediansNotFlagged) {
  const auto m = cross_border_compare(with_values({2.5, 2.5, 2.5, 2.5}, {"UK", "US"}), "biasLevel");
  ASSERT_EQ(m.groups.size(), 2u);
  EXPECT_EQ(m.diff[0][1], 0);
  EXPECT_FALSE(m.flagged[0][1]);
}

TEST(CrossBorder, ConstructedMediansFlagged) {
  // Cycled jurisdictions: UK gets 2.2, 2.3, 2.4 and Sweden 3.1, 3.2, 3.3.
  const auto records = with_values({2.2, 3.1, 2.3, 3.2, 2.4, 3.3}, {"UK", "Sweden"});
  const auto m = cross_border_compare(records, "biasLevel", 0.5);
  EXPECT_EQ(m.groups, (std::vector<std::string>{"Sweden", "UK"}));
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& r : records) rows.emplace_back(r.jurisdiction, r.record.bias_level);
  const auto medians = oracle::group_medians(rows);
  EXPECT_NEAR(m.medians[0], medians.at("Sweden"), kTol);
  EXPECT_NEAR(m.medians[1], medians.at("UK"), kTol);
  EXPECT_NEAR(m.medians[1], 2.3, kTol);
  EXPECT_NEAR(m.medians[0], 3.2, kTol);
  EXPECT_TRUE(m.flagged[0][1]);
  EXPECT_TRUE(m.flagged[1][0]);
  EXPECT_FALSE(m.flagged[0][0]);
  EXPECT_FALSE(cross_border_compare(records, "biasLevel", 1.0).flagged[0][1]);
}

TEST(CrossBorder, SingleJurisdictionRejected) {
  EXPECT_THROW(cross_border_compare(testing::as_stored(testing::sample_records()), "biasLevel"),
               InsufficientGroups);
}

TEST(CrossBorder, PropertyAntisymmetricAndOracleMedians) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> val(0, 10);
  const std::vector<std::string> js = {"US", "UK", "Rwanda", "Sweden", "HongKong"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(5 + trial % 40);
    for (auto& x : v) x = std::round(val(rng) * 10) / 10;
    const std::vector<std::string> groups(js.begin(), js.begin() + 2 + trial % 4);
    const auto records = with_values(v, groups);
    const auto m = cross_border_compare(records, "biasLevel", 1.0);
    std::vector<std::pair<std::string, double>> rows;
    for (const auto& r : records) rows.emplace_back(r.jurisdiction, r.record.bias_level);
    const auto medians = oracle::group_medians(rows);
    for (std::size_t i = 0; i < m.groups.size(); ++i) {
      EXPECT_NEAR(m.medians[i], medians.at(m.groups[i]), kTol);
      for (std::size_t j = 0; j < m.groups.size(); ++j) {
        EXPECT_NEAR(m.diff[i][j], -m.diff[j][i], kTol);
        EXPECT_EQ(m.flagged[i][j], std::fabs(m.diff[i][j]) > 1.0);
      }
    }
  }
}

struct AggregatorHarness {
  explicit AggregatorHarness(std::shared_ptr<Provider> provider)
      : gateway(std::move(provider)), aggregator(store, gateway) {}
  CorpusStore store;
  Gateway gateway;
  Aggregator aggregator;
};

AgentProfile sam() {
  AgentProfile p;
  p.profile_id = ProfileId("sam-v1");
  p.revision = 1;
  p.name = "SAM";
  p.system_prompt = "Describe findings.";
  return p;
}

StubScript narrative_script() {
  StubScript s;
  s.rules.push_back({std::string("SAM"), std::nullopt, std::string(testing::kDeviationNarrative)});
  return s;
}

TEST(ComposeFindings, TopOneDeviationWithScriptedNarrative) {
  AggregatorHarness h(std::make_shared<StubProvider>(narrative_script()));
  testing::store_run(h.store, testing::sample_records());
  const auto records = h.store.query_records();
  const auto result = h.aggregator.compose_findings(records, sam(), 1);
  ASSERT_EQ(result.findings.size(), 1u);
  EXPECT_TRUE(result.failures.empty());
  const auto& f = result.findings[0];
  EXPECT_EQ(f.category, "BiasDeviation");
  EXPECT_EQ(f.narrative, testing::kDeviationNarrative);
  ASSERT_EQ(f.supporting_record_ids.size(), 1u);
  EXPECT_EQ(h.store.get_record(f.supporting_record_ids[0]).record.bias_level, 4.5);

  // Severity equals the oracle's top score.
  std::map<std::string, double> values;
  for (const auto& r : records) values[r.record_id.str()] = r.record.bias_level;
  const auto ranked = oracle::deviation_rank(values);
  const auto top = *std::find_if(ranked.begin(), ranked.end(), [](const auto& r) { return r.rank == 1; });
  EXPECT_NEAR(f.severity, top.score, kTol);
  EXPECT_EQ(f.profile_revision, "sam-v1@1");

  EXPECT_EQ(h.aggregator.get_finding(f.finding_id).narrative, f.narrative);
  const auto bundle = h.aggregator.evidence_bundle(f.finding_id);
  EXPECT_EQ(bundle["records"].size(), 1u);
  EXPECT_EQ(bundle["records"][0]["record"]["biasLevel"], 4.5);
}

TEST(ComposeFindings, TopZeroIsEmpty) {
  AggregatorHarness h(std::make_shared<StubProvider>(narrative_script()));
  testing::store_run(h.store, testing::sample_records());
  const auto result = h.aggregator.compose_findings(h.store.query_records(), sam(), 0);
  EXPECT_TRUE(result.findings.empty());
  EXPECT_TRUE(h.aggregator.list_findings().empty());
}

TEST(ComposeFindings, CrossBorderAndLocationCandidates) {
  const auto records = with_values({2.2, 3.1, 2.3, 3.2, 2.4, 3.3}, {"UK", "Sweden"});
  const auto candidates = select_candidates(records, 1);
  ASSERT_EQ(candidates.size(), 3u);
  EXPECT_EQ(candidates[0].category, "BiasDeviation");
  EXPECT_EQ(candidates[1].category, "CrossBorderPatterns");
  EXPECT_NEAR(candidates[1].severity, 0.9, kTol);
  EXPECT_EQ(candidates[1].supporting_record_ids.size(), 6u);
  EXPECT_EQ(candidates[2].category, "SameLocations");
  const auto again = select_candidates(records, 1);
  for (std::size_t i = 0; i < candidates.size(); ++i) EXPECT_EQ(to_json(again[i]), to_json(candidates[i]));
}

TEST(ComposeFindings, OneFailureDoesNotStopOthers) {
  int calls = 0;
  AggregatorHarness h(std::make_shared<ResponderProvider>([&](const CompletionRequest&) -> std::string {
    if (++calls == 2) throw FatalProviderError("boom");
    return "narrative";
  }));
  testing::store_run(h.store, testing::sample_records());
  const auto result = h.aggregator.compose_findings(h.store.query_records(), sam(), 3);
  EXPECT_EQ(result.findings.size(), 2u);
  ASSERT_EQ(result.failures.size(), 1u);
  EXPECT_EQ(result.failures[0].code, "provider_fatal");
  EXPECT_EQ(h.aggregator.list_findings().size(), 2u);
  EXPECT_THROW(h.aggregator.get_finding(FindingId("F99")), NotFound);
}

TEST(ComposeFindings, FindingJsonRoundTrip) {
  Finding f;
  f.finding_id = FindingId("F1");
  f.category = "Custom";
  f.severity = 1.5;
  f.narrative = "n";
  f.supporting_record_ids = {RecordId("rec-00000001")};
  f.profile_revision = "sam-v1@1";
  f.field = "biasLevel";
  const auto back = finding_from_json(to_json(f));
  EXPECT_EQ(to_json(back), to_json(f));
}

constexpr const char* kFocusQuestion =
    "Which patterns demonstrate the creation of the most interesting public policy...";

TEST(FocusInstruction, AppendCreatesRevisionAndKeepsOriginal) {
  CorpusStore store;
  ProfileRegistry reg(store);
  const auto r1 = reg.create(sam());
  const auto r2 = append_focus_instruction(reg, r1.profile_id, kFocusQuestion);
  EXPECT_EQ(r2.revision, 2);
  EXPECT_EQ(r2.parent_revision, 1);
  EXPECT_NE(r2.system_prompt.find(kFocusQuestion), std::string::npos);
  EXPECT_EQ(r2.system_prompt.rfind(r1.system_prompt, 0), 0u);
  EXPECT_EQ(reg.get(r1.profile_id, 1).system_prompt, "Describe findings.");
}

TEST(FocusInstruction, AppendTwiceKeepsOrderAndLineage) {
  CorpusStore store;
  ProfileRegistry reg(store);
  const auto r1 = reg.create(sam());
  append_focus_instruction(reg, r1.profile_id, "First question?");
  const auto r3 = append_focus_instruction(reg, r1.profile_id, "Second question?");
  const auto first = r3.system_prompt.find("First question?");
  const auto second = r3.system_prompt.find("Second question?");
  ASSERT_NE(first, std::string::npos);
  ASSERT_NE(second, std::string::npos);
  EXPECT_LT(first, second);
  const auto lineage = reg.lineage(r1.profile_id);
  ASSERT_EQ(lineage.size(), 3u);
  for (std::size_t i = 1; i < lineage.size(); ++i) {
    EXPECT_EQ(lineage[i].parent_revision, lineage[i - 1].revision);
  }
  EXPECT_THROW(append_focus_instruction(reg, r1.profile_id, ""), PreconditionError);
}

}  // namespace
}  // namespace saap
