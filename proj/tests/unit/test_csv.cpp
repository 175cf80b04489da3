#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "saap/csv.hpp"

namespace saap {
namespace {

namespace oracle = testing::oracle;

std::vector<AnalysisRecord> random_batch(std::uint64_t seed, std::size_t n, const SchemaConfig& schema) {
  std::mt19937_64 rng(seed);
  std::vector<AnalysisRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_record(rng, schema));
  return out;
}

TEST(Csv, HundredRecordsGiveHundredAndOneLines) {
  const auto records = random_batch(1, 100, full_schema());
  const std::string csv = export_csv(records, full_schema());
  // Cells may hold line breaks, so count physical lines on newline-free data.
  std::vector<AnalysisRecord> flat;
  for (int i = 0; i < 100; ++i) flat.push_back(testing::sample_records()[i % 25]);
  EXPECT_EQ(oracle::line_count(export_csv(flat, full_schema())), 101u);
  EXPECT_EQ(import_csv(csv, full_schema()).size(), 100u);
}

TEST(Csv, EmptyListIsHeaderOnly) {
  const std::string csv = export_csv({}, default_schema());
  EXPECT_EQ(csv, csv_header(default_schema()));
  EXPECT_EQ(oracle::line_count(csv), 1u);
  EXPECT_TRUE(import_csv(csv, default_schema()).empty());
}

TEST(Csv, HeaderFollowsColumnOrder) {
  const auto schema = full_schema();
  std::string expected;
  for (const auto& c : schema.csv_column_order) expected += (expected.empty() ? "" : ",") + c;
  EXPECT_EQ(csv_header(schema), expected + "\n");
}

TEST(Csv, SampleFixtureRoundTrip) {
  const auto records = testing::sample_records();
  EXPECT_EQ(import_csv(export_csv(records, default_schema()), default_schema()), records);
  const auto extended = testing::sample_records_extended();
  EXPECT_EQ(import_csv(export_csv(extended, full_schema()), full_schema()), extended);
}

TEST(Csv, ExportIsByteStable) {
  const auto records = testing::sample_records();
  EXPECT_EQ(export_csv(records, default_schema()), export_csv(records, default_schema()));
  const std::string once = export_csv(records, default_schema());
  EXPECT_EQ(export_csv(import_csv(once, default_schema()), default_schema()), once);
}

TEST(Csv, PropertyRoundTripRandomBatches) {
  for (const auto& schema : {default_schema(), full_schema()}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto records = random_batch(seed, 1 + seed * 5, schema);
      EXPECT_EQ(import_csv(export_csv(records, schema), schema), records) << "seed " << seed;
    }
  }
}

TEST(Csv, RowWidthMismatchReportsRow) {
  std::string csv = export_csv(testing::sample_records(), default_schema());
  // Drop the last cell of the third data row (line index 3).
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    if (csv[i] == '\n') {
      lines.push_back(csv.substr(start, i - start));
      start = i + 1;
    }
  }
  lines[3] = lines[3].substr(0, lines[3].rfind(','));
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  try {
    import_csv(broken, default_schema());
    FAIL();
  } catch (const ParseFailure& e) {
    EXPECT_EQ(e.row(), 3);
  }
}

TEST(Csv, MalformedInputs) {
  EXPECT_THROW(import_csv("", default_schema()), ParseFailure);
  EXPECT_THROW(import_csv("wrong,header\n", default_schema()), ParseFailure);
  const std::string header = csv_header(default_schema());
  EXPECT_THROW(import_csv(header + "\"unterminated\n", default_schema()), ParseFailure);
}

TEST(Csv, InvalidRecordsAreRefused) {
  auto r = testing::sample_records().front();
  r.bias_level = 11;
  EXPECT_THROW(export_csv(std::vector<AnalysisRecord>{r}, default_schema()), SchemaViolation);
}

TEST(Csv, QuotingOfAwkwardText) {
  auto r = testing::sample_records().front();
  r.context = "a \"quoted\", multi\nline cell";
  const std::string csv = export_csv(std::vector<AnalysisRecord>{r}, default_schema());
  EXPECT_NE(csv.find("\"a \"\"quoted\"\", multi\nline cell\""), std::string::npos);
  EXPECT_EQ(import_csv(csv, default_schema()).front().context, r.context);
}

}  // namespace
}  // namespace saap
