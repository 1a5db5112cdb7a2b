#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "appfate/ingest.hpp"
#include "appfate/synthetic.hpp"
#include "test_fixtures.hpp"

namespace appfate {
namespace {

TEST(ParseRecords, WhatsAppRow) {
  std::istringstream in(testing_support::csv_of({testing_support::whatsapp_record()}));
  auto result = parse_records(in);
  ASSERT_TRUE(result.errors.empty()) << result.errors.front().reason;
  ASSERT_EQ(result.records.size(), 1u);
  const auto& r = result.records[0];
  EXPECT_EQ(r.title, "WhatsApp Messenger");
  EXPECT_EQ(*r.ratings, 114391572);
  EXPECT_EQ(*r.star_ratings[4], 100000000);
  EXPECT_EQ(*r.last_updated, (Date{std::chrono::year{2020}, std::chrono::May, std::chrono::day{13}}));
  EXPECT_EQ(r.source_row, 2u);
}

TEST(ParseRecords, OpenEndedDownloadsIsDegenerateRange) {
  auto rec = testing_support::whatsapp_record();
  std::istringstream in(testing_support::csv_of({rec}, {{"downloads", "5,000,000,000+"}}));
  auto result = parse_records(in);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(*result.records[0].downloads, (DownloadRange{5000000000LL, 5000000000LL}));
}

TEST(ParseRecords, RangeDownloads) {
  std::istringstream in(testing_support::csv_of({testing_support::whatsapp_record()}, {{"downloads", "5,000 - 10,000"}}));
  auto result = parse_records(in);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(*result.records[0].downloads, (DownloadRange{5000, 10000}));
}

TEST(ParseRecords, EmptyPrivacyLinkIsAbsent) {
  std::istringstream in(testing_support::csv_of({testing_support::whatsapp_record()}, {{"privacy_policy_link", ""}}));
  auto result = parse_records(in);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_FALSE(result.records[0].privacy_policy_link.has_value());
}

TEST(ParseRecords, NonNumericRatingsIsRowError) {
  std::istringstream in(testing_support::csv_of({testing_support::whatsapp_record()}, {{"ratings", "abc"}}));
  auto result = parse_records(in);
  EXPECT_TRUE(result.records.empty());
  ASSERT_EQ(result.errors.size(), 1u);
  EXPECT_EQ(result.errors[0].row, 2u);
  EXPECT_EQ(result.errors[0].reason, "ratings: not an integer");
}

TEST(ParseRecords, MissingHeaderColumnIsFatal) {
  std::istringstream in("title,description\nx,y\n");
  try {
    parse_records(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing column: last_updated"), std::string::npos) << e.what();
  }
}

TEST(ParseRecords, FourthStatusColumnRejected) {
  std::string csv = testing_support::csv_of({testing_support::whatsapp_record()});
  csv.insert(csv.find('\n'), ",status_jan20");
  std::istringstream in(csv);
  EXPECT_THROW(parse_records(in), DataError);
}

TEST(ParseRecords, WrongFieldCountReported) {
  std::string csv = testing_support::csv_of({});
  csv += "only,three,fields\n";
  std::istringstream in(csv);
  auto result = parse_records(in);
  ASSERT_EQ(result.errors.size(), 1u);
  EXPECT_NE(result.errors[0].reason.find("expected 27 fields"), std::string::npos);
}

TEST(ParseRecords, QuotedFieldsWithCommasAndNewlines) {
  auto rec = testing_support::whatsapp_record();
  rec.description = "Line one, with comma\nline \"two\"";
  std::istringstream in(testing_support::csv_of({rec}));
  auto result = parse_records(in);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].description, rec.description);
}

TEST(AggregateStatus, AllEightTriples) {
  int labeled = 0;
  for (int bits = 0; bits < 8; ++bits) {
    const std::array<bool, 3> t{bool(bits & 4), bool(bits & 2), bool(bits & 1)};
    const auto label = aggregate_status(t);
    if (bits == 7) {
      EXPECT_EQ(label, Label::Removed);
    } else if (bits == 0) {
      EXPECT_EQ(label, Label::Stable);
    } else {
      EXPECT_FALSE(label.has_value()) << bits;
    }
    labeled += label.has_value();
  }
  EXPECT_EQ(labeled, 2);
}

TEST(FilterComplete, KeepsCompleteRemovedRecord) {
  auto rec = testing_support::whatsapp_record();
  rec.status_checks = {true, true, true};
  auto result = filter_complete({rec});
  ASSERT_EQ(result.kept.size(), 1u);
  EXPECT_EQ(result.labels[0], Label::Removed);
}

TEST(FilterComplete, DropReasons) {
  auto base = testing_support::whatsapp_record();
  auto no_genre = base;
  no_genre.genre.clear();
  no_genre.source_row = 7;
  auto mixed = base;
  mixed.status_checks = {true, false, true};
  mixed.source_row = 8;
  auto bad_stars = base;
  bad_stars.star_ratings[0] = *base.ratings;
  bad_stars.source_row = 9;
  auto bad_downloads = base;
  bad_downloads.downloads = DownloadRange{10, 5};
  bad_downloads.source_row = 10;
  auto result = filter_complete({no_genre, mixed, bad_stars, bad_downloads, base});
  ASSERT_EQ(result.kept.size(), 1u);
  ASSERT_EQ(result.drops.size(), 4u);
  EXPECT_EQ(result.drops[0].row, 7u);
  EXPECT_EQ(result.drops[0].reason, "missing:genre");
  EXPECT_EQ(result.drops[1].reason, "status:mixed");
  EXPECT_EQ(result.drops[2].reason, "invalid:star_ratings");
  EXPECT_EQ(result.drops[3].reason, "invalid:downloads");
  EXPECT_EQ(result.drop_counts["status:mixed"], 1u);
}

TEST(FilterComplete, OptionalFieldsMayBeAbsent) {
  auto rec = testing_support::whatsapp_record();
  rec.whats_new.reset();
  rec.privacy_policy_link.reset();
  rec.developer_email.reset();
  rec.developer_website.reset();
  rec.developer_address.reset();
  EXPECT_EQ(filter_complete({rec}).kept.size(), 1u);
}

TEST(FilterComplete, KeptRecordsSatisfyInvariants) {
  auto data = eval::gen_synthetic(500, 3);
  // Corrupt some rows.
  for (std::size_t i = 0; i < data.records.size(); i += 7) data.records[i].status_checks[1] = !*data.records[i].status_checks[1];
  for (std::size_t i = 3; i < data.records.size(); i += 11) data.records[i].ratings = -1;
  const auto result = filter_complete(data.records);
  for (const auto& r : result.kept) {
    std::int64_t stars = 0;
    for (const auto& s : r.star_ratings) stars += *s;
    EXPECT_LE(stars, *r.ratings);
    EXPECT_LE(r.downloads->low, r.downloads->high);
    EXPECT_GE(r.downloads->low, 0);
    EXPECT_TRUE(incompleteness_reason(r).empty());
  }
  EXPECT_EQ(result.kept.size() + result.drops.size(), data.records.size());
}

TEST(WriteRecords, RoundTripsKeptRecords) {
  auto data = eval::gen_synthetic(300, 11);
  auto kept = filter_complete(data.records).kept;
  kept.push_back(testing_support::whatsapp_record());
  kept.back().extra = kept.front().extra;
  std::ostringstream out;
  write_records(out, kept);
  std::istringstream in(out.str());
  auto parsed = parse_records(in);
  ASSERT_TRUE(parsed.errors.empty());
  ASSERT_EQ(parsed.records.size(), kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    auto expected = kept[i];
    expected.source_row = parsed.records[i].source_row;
    EXPECT_EQ(parsed.records[i], expected) << "record " << i;
  }
}

TEST(DropReport, CsvColumns) {
  std::ostringstream out;
  write_drop_report(out, {{4, "missing:genre"}, {9, "status:mixed"}});
  EXPECT_EQ(out.str(), "row,reason\n4,missing:genre\n9,status:mixed\n");
}

TEST(Summarize, Histograms) {
  auto a = testing_support::whatsapp_record();
  a.genre = "Casino";
  a.reviews_average = 3.0;
  auto b = a;
  b.reviews_average = 3.6;
  const auto s = summarize({a, b}, {Label::Removed, Label::Removed});
  EXPECT_EQ(s.genre_histogram.size(), 1u);
  EXPECT_EQ(s.genre_histogram.at("Casino"), 2u);
  EXPECT_NEAR(s.review_mean_by_label.at(Label::Removed), 3.3, 1e-12);
  EXPECT_EQ(s.lowest_version_histogram.at("Ice Cream Sandwich"), 2u);
  EXPECT_EQ(s.class_counts.at(Label::Removed), 2u);
}

TEST(Summarize, EmptyInput) {
  const auto s = summarize({}, {});
  EXPECT_TRUE(s.genre_histogram.empty());
  EXPECT_TRUE(s.class_counts.empty());
}

TEST(Summarize, HistogramsSumToRecordCount) {
  auto data = eval::gen_synthetic(200, 5);
  auto kept = filter_complete(data.records);
  const auto s = summarize(kept.kept, kept.labels);
  std::size_t g = 0, v = 0;
  for (auto& [k, c] : s.genre_histogram) g += c;
  for (auto& [k, c] : s.lowest_version_histogram) v += c;
  EXPECT_EQ(g, kept.kept.size());
  EXPECT_EQ(v, kept.kept.size());
}

TEST(ParseDate, Forms) {
  using namespace std::chrono;
  EXPECT_EQ(*parse_date("May 13, 2020"), (year{2020} / May / 13));
  EXPECT_EQ(*parse_date("2019-06-01"), (year{2019} / June / 1));
  EXPECT_EQ(*parse_date("Sep 3, 2018"), (year{2018} / September / 3));
  EXPECT_FALSE(parse_date("13/05/2020"));
  EXPECT_FALSE(parse_date("February 30, 2020"));
}

}  // namespace
}  // namespace appfate
