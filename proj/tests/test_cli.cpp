#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "appfate/csv.hpp"
#include "appfate/ensemble.hpp"
#include "httplib.h"
#include "process.hpp"

namespace appfate {
namespace {

using testing_support::Child;
using testing_support::RunResult;
using testing_support::slurp;
namespace fs = std::filesystem;

RunResult cli(std::vector<std::string> args) { return testing_support::run_program(APPFATE_CLI_PATH, std::move(args)); }

// One generated data set and one small developer model shared by the suite.
struct Workspace {
  fs::path dir;
  std::string apps, truth, model;

  Workspace() {
    dir = fs::temp_directory_path() / ("appfate_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    apps = (dir / "apps.csv").string();
    truth = (dir / "truth.csv").string();
    model = (dir / "m.json").string();
    auto g = cli({"gen-data", "--n", "1500", "--seed", "3", "--out", apps, "--truth-out", truth});
    if (g.exit_code != 0) throw std::runtime_error(g.err);
    auto t = cli({"train", "--in", apps, "--model-out", model, "--seed", "7", "--subset", "400", "--trees", "16,32"});
    if (t.exit_code != 0) throw std::runtime_error(t.err);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const Workspace& ws() {
  static const Workspace w;
  return w;
}

Json read_json(const std::string& path) { return Json::parse(slurp(path)); }

Json without_timestamp(Json doc) {
  doc.erase("created_at");
  return doc;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t csv_records(const std::string& path) {
  std::ifstream in(path);
  csv::Reader reader(in);
  std::size_t n = 0;
  while (reader.next()) ++n;
  return n;
}

TEST(Usage, NoSubcommandExitsTwo) {
  const auto r = cli({});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST(Usage, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("gen-data"), std::string::npos);
}

TEST(Usage, UnknownFlagAndBadValuesExitTwo) {
  EXPECT_EQ(cli({"train", "--in", ws().apps, "--model-out", ws().path("x.json"), "--bogus"}).exit_code, 2);
  EXPECT_EQ(cli({"train", "--in", ws().apps, "--model-out", ws().path("x.json"), "--variant", "both"}).exit_code, 2);
  const auto t = cli({"train", "--in", ws().apps, "--model-out", ws().path("x.json"), "--threshold", "1.5"});
  EXPECT_EQ(t.exit_code, 2);
  EXPECT_NE(t.err.find("--threshold"), std::string::npos);
  EXPECT_EQ(cli({"train", "--in", ws().apps, "--model-out", ws().path("x.json"), "--subset", "3"}).exit_code, 2);
  EXPECT_EQ(cli({"importance", "--model", ws().path("absent.json")}).exit_code, 2);
}

TEST(GenData, SameSeedSameBytes) {
  const auto a = ws().path("g1.csv"), b = ws().path("g2.csv"), c = ws().path("g3.csv");
  ASSERT_EQ(cli({"gen-data", "--n", "5000", "--seed", "1", "--out", a}).exit_code, 0);
  ASSERT_EQ(cli({"gen-data", "--n", "5000", "--seed", "1", "--out", b}).exit_code, 0);
  ASSERT_EQ(cli({"gen-data", "--n", "5000", "--seed", "2", "--out", c}).exit_code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
  EXPECT_EQ(csv_records(a), 5001u);
}

TEST(GenData, StdoutWhenNoOutPath) {
  const auto file = ws().path("g20.csv");
  ASSERT_EQ(cli({"gen-data", "--n", "20", "--seed", "1", "--out", file}).exit_code, 0);
  const auto r = cli({"gen-data", "--n", "20", "--seed", "1"});
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, slurp(file));
}

TEST(ArgFile, ExpandsToSameInvocation) {
  const auto flags = ws().path("flags.txt");
  std::ofstream(flags) << "# generator settings\n--n 200\n--seed \"9\"\n";
  const auto a = cli({"gen-data", "@" + flags});
  const auto b = cli({"gen-data", "--n", "200", "--seed", "9"});
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(cli({"gen-data", "@" + ws().path("missing.txt")}).exit_code, 2);
}

TEST(Ingest, SummaryAndCleanCsv) {
  const auto clean = ws().path("clean.csv"), drops = ws().path("drops.csv");
  const auto r = cli({"ingest", "--in", ws().apps, "--out", clean, "--drops", drops});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["kept"].get<std::size_t>() + j["dropped"].get<std::size_t>(), 1500u);
  EXPECT_EQ(lines_of(slurp(drops)).front(), "row,reason");
  EXPECT_EQ(csv_records(clean), j["kept"].get<std::size_t>() + 1);
}

TEST(Train, DeveloperDefaultsToOneMember) {
  const auto doc = read_json(ws().model);
  EXPECT_EQ(doc["variant"], "developer");
  EXPECT_EQ(doc["members"].size(), 1u);
  EXPECT_EQ(doc["config"]["n_classifiers"], 1);
  EXPECT_FALSE(doc["created_at"].get<std::string>().empty());
  EXPECT_TRUE(doc["threshold"].is_number());
}

TEST(Train, UserDefaultsToElevenMembers) {
  const auto m = ws().path("user.json");
  const auto r = cli({"train", "--variant", "user", "--in", ws().apps, "--model-out", m, "--subset", "100", "--trees",
                      "4", "--depths", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(read_json(m)["members"].size(), 11u);
}

TEST(Train, PrintsValidationAucAndThreshold) {
  const auto m = ws().path("p.json");
  const auto r = cli({"train", "--in", ws().apps, "--model-out", m, "--subset", "200", "--trees", "8"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("validation_auc 0."), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("threshold "), std::string::npos);
  EXPECT_NE(r.err.find("complete rows"), std::string::npos);
}

TEST(Train, FixedThresholdIsStored) {
  const auto m = ws().path("fixed.json");
  ASSERT_EQ(cli({"train", "--in", ws().apps, "--model-out", m, "--subset", "200", "--trees", "8", "--threshold",
                 "0.25"})
                .exit_code,
            0);
  EXPECT_DOUBLE_EQ(read_json(m)["threshold"].get<double>(), 0.25);
}

TEST(Train, SameSeedIdenticalModelApartFromTimestamp) {
  const auto a = ws().path("d1.json"), b = ws().path("d2.json"), c = ws().path("d3.json");
  const std::vector<std::string> base{"train", "--in", ws().apps, "--classifiers", "3", "--subset", "300", "--trees",
                                      "16,32"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  ASSERT_EQ(with({"--model-out", a, "--jobs", "1", "--seed", "7"}).exit_code, 0);
  ASSERT_EQ(with({"--model-out", b, "--jobs", "4", "--seed", "7"}).exit_code, 0);
  ASSERT_EQ(with({"--model-out", c, "--jobs", "1", "--seed", "8"}).exit_code, 0);
  EXPECT_EQ(without_timestamp(read_json(a)).dump(), without_timestamp(read_json(b)).dump());
  EXPECT_NE(without_timestamp(read_json(a)).dump(), without_timestamp(read_json(c)).dump());
}

TEST(Train, MissingColumnExitsTwoAndNamesIt) {
  std::ifstream in(ws().apps);
  csv::Reader reader(in);
  const auto bad = ws().path("no_genre.csv");
  std::ofstream out(bad);
  std::size_t drop = 0;
  bool first = true;
  while (auto row = reader.next()) {
    if (first) drop = std::size_t(std::find(row->begin(), row->end(), "genre") - row->begin());
    first = false;
    row->erase(row->begin() + std::ptrdiff_t(drop));
    csv::write_row(out, *row);
  }
  out.close();
  const auto r = cli({"train", "--in", bad, "--model-out", ws().path("x.json")});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("genre"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(ws().path("x.json")));
}

TEST(Evaluate, TextReportAndRocCsv) {
  const auto roc = ws().path("roc.csv");
  const auto r = cli({"evaluate", "--model", ws().model, "--in", ws().apps, "--roc-out", roc});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("AUC ", 0), 0u) << r.out;
  const auto rows = lines_of(slurp(roc));
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows.front(), "threshold,fpr,tpr");
  for (const auto& row : rows) EXPECT_EQ(std::count(row.begin(), row.end(), ','), 2) << row;
  EXPECT_EQ(rows.back().substr(rows.back().find(',')), ",1,1");
}

TEST(Evaluate, JsonWithBayesReference) {
  const auto r = cli({"evaluate", "--model", ws().model, "--in", ws().apps, "--truth", ws().truth, "--json"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_GT(j["bayes_auc"].get<double>(), 0.5);
  EXPECT_LE(j["importance_top"].size(), 20u);
  const auto& c = j["confusion"];
  EXPECT_EQ(c["tp"].get<int>() + c["fp"].get<int>() + c["tn"].get<int>() + c["fn"].get<int>(), 1500);
}

TEST(Evaluate, FeatureMatrixMatchesCsvAndWidthMismatchExitsTwo) {
  const auto x = ws().path("x_dev.csv");
  ASSERT_EQ(cli({"features", "--model", ws().model, "--in", ws().apps, "--out", x}).exit_code, 0);
  const auto from_csv = cli({"evaluate", "--model", ws().model, "--in", ws().apps, "--json"});
  const auto from_matrix = cli({"evaluate", "--model", ws().model, "--in", x, "--json"});
  ASSERT_EQ(from_matrix.exit_code, 0) << from_matrix.err;
  EXPECT_EQ(Json::parse(from_csv.out)["auc"], Json::parse(from_matrix.out)["auc"]);

  const auto user_model = ws().path("user_small.json");
  ASSERT_EQ(cli({"train", "--variant", "user", "--classifiers", "1", "--in", ws().apps, "--model-out", user_model,
                 "--subset", "100", "--trees", "4"})
                .exit_code,
            0);
  const auto xu = ws().path("x_user.csv");
  ASSERT_EQ(cli({"features", "--model", user_model, "--in", ws().apps, "--out", xu}).exit_code, 0);
  const auto r = cli({"evaluate", "--model", ws().model, "--in", xu});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("model expects"), std::string::npos) << r.err;
}

TEST(Grid, FourCellTable) {
  const auto r = cli({"grid", "--in", ws().apps, "--classifiers", "1,3", "--sizes", "500,2000", "--trees", "8",
                      "--seed", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = lines_of(r.out);
  ASSERT_EQ(rows.size(), 3u) << r.out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream s(rows[i]);
    int count;
    double a, b;
    ASSERT_TRUE(s >> count >> a >> b) << rows[i];
    EXPECT_GT(a, 0.5);
    EXPECT_GT(b, 0.5);
  }
  const auto j = cli({"grid", "--in", ws().apps, "--classifiers", "1,3", "--sizes", "500,2000", "--trees", "8",
                      "--seed", "2", "--json"});
  EXPECT_EQ(Json::parse(j.out).size(), 4u);
}

TEST(Predict, JsonRequestGivesPredictResponse) {
  const auto r = cli({"predict", "--model", ws().model, "--in", std::string(APPFATE_SAMPLES_DIR) + "/one_app.json"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = Json::parse(r.out);
  const double score = j["score"];
  EXPECT_GT(score, 0.0);
  EXPECT_LT(score, 1.0);
  EXPECT_EQ(j["label"], score > j["threshold"].get<double>() ? "Removed" : "Stable");
  EXPECT_EQ(j["model_version"], model_version(load_file(ws().model)));
  EXPECT_FALSE(j["top_importance"].empty());
}

TEST(Predict, ArrayAndRejectedRequest) {
  const auto arr = ws().path("two.json");
  std::ofstream(arr) << R"([{"title": "a"}, {"title": "b", "price": 2.99}])";
  const auto r = cli({"predict", "--model", ws().model, "--in", arr});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out).size(), 2u);

  const auto bad = ws().path("bad.json");
  std::ofstream(bad) << R"({"downloads": "1,000+"})";
  const auto e = cli({"predict", "--model", ws().model, "--in", bad});
  EXPECT_EQ(e.exit_code, 2);
  EXPECT_NE(e.err.find("downloads"), std::string::npos) << e.err;
}

TEST(Predict, CsvInputGivesScoreRows) {
  const auto r = cli({"predict", "--model", ws().model, "--in", ws().apps});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = lines_of(r.out);
  EXPECT_EQ(rows.front(), "row,score,label");
  EXPECT_EQ(rows.size(), 1501u);
}

TEST(Importance, JsonSumsToOneAndTextHasRanks) {
  const auto r = cli({"importance", "--model", ws().model, "--json", "--top", "1000"});
  ASSERT_EQ(r.exit_code, 0);
  double total = 0.0;
  for (const auto& e : Json::parse(r.out)) total += e["score"].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-9);
  const auto t = cli({"importance", "--model", ws().model, "--top", "3"});
  EXPECT_EQ(lines_of(t.out).size(), 3u);
}

TEST(Serve, HealthReloadOnSighupAndCleanStop) {
  const auto served = ws().path("served.json");
  fs::copy_file(ws().model, served, fs::copy_options::overwrite_existing);
  Child child(APPFATE_CLI_PATH, {"serve", "--listen", "127.0.0.1:0"}, {"APPFATE_MODEL=" + served});
  const auto banner = child.read_line();
  ASSERT_EQ(banner.rfind("listening on 127.0.0.1:", 0), 0u) << banner;
  const int port = std::stoi(banner.substr(banner.find(':') + 1));

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  const auto before = Json::parse(health->body);
  EXPECT_EQ(before["status"], "ok");
  EXPECT_EQ(before["model_version"], model_version(load_file(ws().model)));

  const auto next = ws().path("reload.json");
  ASSERT_EQ(cli({"train", "--in", ws().apps, "--model-out", next, "--subset", "200", "--trees", "8", "--seed", "99"})
                .exit_code,
            0);
  fs::copy_file(next, served, fs::copy_options::overwrite_existing);
  child.signal(SIGHUP);
  const auto reloaded = child.read_line();
  EXPECT_EQ(reloaded.rfind("reloaded model ", 0), 0u) << reloaded;
  const auto after = Json::parse(client.Get("/v1/health")->body);
  EXPECT_NE(after["model_version"], before["model_version"]);

  std::ofstream(served) << "not json";
  child.signal(SIGHUP);
  EXPECT_EQ(child.read_line().rfind("reload failed", 0), 0u);
  EXPECT_EQ(Json::parse(client.Get("/v1/health")->body)["model_version"], after["model_version"]);

  child.signal(SIGTERM);
  EXPECT_EQ(child.wait(), 0);
}

}  // namespace
}  // namespace appfate
