// Drives the triage executable end to end on fixture studies.

#include <gtest/gtest.h>

#include "support.hpp"

using nlohmann::json;
using fixture::quote;
using fixture::run;
using L = lustriage::LandmarkClass;
namespace fs = std::filesystem;

#ifndef TRIAGE_BIN
#error "TRIAGE_BIN must name the triage executable"
#endif

namespace {

std::string triage(const std::string& args) {
  return std::string("env -u TRIAGE_CONFIG '") + TRIAGE_BIN + "' " + args + " 2>/dev/null";
}

struct Study {
  fixture::TempDir dir{"cli"};
  fs::path manifest;

  Study() {
    manifest = fixture::write_study(
        dir.path(), "s1",
        {{"v1", 3, {{L::Pleura, L::ALines}, {L::Pleura, L::AirBronchogram}, {L::Pleura}}},
         {"v2", 7, {{L::Pleura, L::Rib, L::ALines}, {}}},
         {"v3", std::nullopt, {{L::Pleura, L::BLines, L::Rib, L::Shadow}}}});
  }
};

}  // namespace

TEST(Cli, ScoreIsByteIdenticalAcrossRuns) {
  Study s;
  ASSERT_EQ(run(triage("score --manifest " + quote(s.manifest) + " --out " +
                       quote(s.dir / "a.json")))
                .status,
            0);
  ASSERT_EQ(run(triage("score --manifest " + quote(s.manifest) + " --out " +
                       quote(s.dir / "b.json")))
                .status,
            0);
  const auto a = fixture::slurp(s.dir / "a.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, fixture::slurp(s.dir / "b.json"));

  const auto doc = json::parse(a);
  EXPECT_EQ(doc["schema_version"], 1);
  ASSERT_EQ(doc["videos"].size(), 3u);
  const auto& v1 = doc["videos"][0];
  EXPECT_EQ(v1["video_severity"], 4);
  EXPECT_EQ(v1["diagnosis"], "Abnormal");
  EXPECT_EQ(v1["worst_frame_id"], "v1-f1");
  EXPECT_EQ(v1["scan_location"], 3);
  EXPECT_EQ(v1["frames"][2]["severity"]["class"], 6);
  EXPECT_EQ(doc["videos"][1]["diagnosis"], "Normal");
  EXPECT_EQ(doc["videos"][2]["frames"][0]["quality"]["score"], 100);
}

TEST(Cli, ConfigFromEnvironment) {
  Study s;
  fixture::write_file(s.dir / "cfg.json", R"({"confidence_threshold": 0.95})");
  const auto r = run("TRIAGE_CONFIG=" + quote(s.dir / "cfg.json") + " '" + TRIAGE_BIN +
                     "' score --manifest " + quote(s.manifest));
  ASSERT_EQ(r.status, 0);
  const auto doc = json::parse(r.out);
  EXPECT_EQ(doc["config"]["confidence_threshold"], 0.95);
  for (const auto& v : doc["videos"]) EXPECT_EQ(v["video_severity"], -2);

  // an explicit --config wins over the environment
  fixture::write_file(s.dir / "cfg2.json", R"({"confidence_threshold": 0.5})");
  const auto r2 = run("TRIAGE_CONFIG=" + quote(s.dir / "cfg.json") + " '" + TRIAGE_BIN +
                      "' --config " + quote(s.dir / "cfg2.json") + " score --manifest " +
                      quote(s.manifest));
  EXPECT_EQ(json::parse(r2.out)["videos"][0]["video_severity"], 4);
}

TEST(Cli, ReportAndSvg) {
  Study s;
  ASSERT_EQ(run(triage("report --manifest " + quote(s.manifest) + " --out " +
                       quote(s.dir / "r.json") + " --svg " + quote(s.dir / "r.svg")))
                .status,
            0);
  const auto doc = json::parse(fixture::slurp(s.dir / "r.json"));
  ASSERT_EQ(doc["locations"].size(), 14u);
  EXPECT_EQ(doc["locations"]["3"]["color"], "Red");
  EXPECT_EQ(doc["locations"]["7"]["color"], "Green");
  EXPECT_EQ(doc["locations"]["9"]["color"], "Black");
  EXPECT_EQ(doc["locations"]["3"]["boxplot"]["max"], 4.0);
  EXPECT_NE(fixture::slurp(s.dir / "r.svg").find("data-color=\"Red\""), std::string::npos);
}

TEST(Cli, SummarizeCopiesFrames) {
  Study s;
  const auto out = s.dir / "sum";
  ASSERT_EQ(run(triage("summarize --manifest " + quote(s.manifest) + " --video v1 --out " +
                       quote(out)))
                .status,
            0);
  const auto doc = json::parse(fixture::slurp(out / "summary.json"));
  ASSERT_EQ(doc["frames"].size(), 1u);
  EXPECT_EQ(doc["frames"][0]["frame_id"], "v1-f1");
  EXPECT_TRUE(fs::exists(out / "v1-f1.png"));
  EXPECT_NE(run(triage("summarize --manifest " + quote(s.manifest) + " --video nope --out " +
                       quote(out)))
                .status,
            0);
}

TEST(Cli, MetricsFromConfusionFile) {
  fixture::TempDir dir;
  fixture::write_file(dir / "m.json", R"({"rows": ["a", "b"], "columns": ["a", "b", "No class"],
                                          "counts": [[3, 1, 5], [2, 4, 0]]})");
  const auto r = run(triage("metrics --confusion " + quote(dir / "m.json") +
                            " --exclude 'No class'"));
  ASSERT_EQ(r.status, 0);
  const auto doc = json::parse(r.out);
  EXPECT_DOUBLE_EQ(doc["classes"][0]["sensitivity"].get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(doc["classes"][0]["specificity"].get<double>(), 4.0 / 6.0);

  fixture::write_file(dir / "b.json", R"({"rows": ["Abnormal", "Normal"],
      "columns": ["Abnormal", "Normal", "Undetected"], "counts": [[89, 3, 1], [6, 29, 2]]})");
  const auto b = json::parse(
      run(triage("metrics --binary --confusion " + quote(dir / "b.json"))).out);
  EXPECT_NEAR(b["binary"]["accuracy"].get<double>(), 118.0 / 130.0, 1e-12);

  fixture::write_file(dir / "bad.json", R"({"rows": ["a"], "columns": ["a"], "counts": [[-1]]})");
  EXPECT_EQ(run(triage("metrics --confusion " + quote(dir / "bad.json"))).status, 1);
}

TEST(Cli, EvaluateSelfIsPerfect) {
  Study s;
  const auto r = run(triage("evaluate --gt-manifest " + quote(s.manifest) + " --pred-manifest " +
                            quote(s.manifest) + " --iou sweep --curves " +
                            quote(s.dir / "c.csv")));
  ASSERT_EQ(r.status, 0);
  const auto doc = json::parse(r.out);
  EXPECT_DOUBLE_EQ(doc["map50"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(doc["map50_95"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(doc["operating_point"]["all"]["recall"].get<double>(), 1.0);
  const auto csv = fixture::slurp(s.dir / "c.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,threshold,precision,recall,f1");

  EXPECT_NE(run(triage("evaluate --gt-manifest " + quote(s.manifest) + " --pred-manifest " +
                       quote(s.manifest) + " --iou 2")).status,
            0);
}

TEST(Cli, QueueOverrideExport) {
  Study s;
  auto q = json::parse(run(triage("queue --manifest " + quote(s.manifest))).out);
  // v1-f2 is pleura only, v2-f1 is empty
  ASSERT_EQ(q["entries"].size(), 2u);
  EXPECT_EQ(q["entries"][0]["frame_id"], "v1-f2");
  EXPECT_EQ(q["entries"][0]["reason"], "PleuraOnly");
  EXPECT_EQ(q["entries"][1]["reason"], "LowQuality");

  fixture::write_file(s.dir / "ann.json",
                      R"([{"class": "Pleura", "bbox": [0, 0, 60, 5]},
                          {"class": "Consolidation", "bbox": [10, 10, 30, 40]}])");
  const auto o = run(triage("override --manifest " + quote(s.manifest) +
                            " --frame v1-f2 --author dr-x --annotations " +
                            quote(s.dir / "ann.json")));
  ASSERT_EQ(o.status, 0);
  EXPECT_EQ(json::parse(o.out)["rescored"]["severity"]["class"], 4);

  q = json::parse(run(triage("queue --manifest " + quote(s.manifest) + " --flag v3-f0")).out);
  ASSERT_EQ(q["entries"].size(), 3u);
  EXPECT_EQ(q["entries"][0]["status"], "Reviewed");
  EXPECT_EQ(q["entries"][2]["reason"], "ClinicianFlag");

  ASSERT_EQ(run(triage("export --manifest " + quote(s.manifest) + " --out " +
                       quote(s.dir / "exp")))
                .status,
            0);
  const auto m = json::parse(fixture::slurp(s.dir / "exp" / "export_manifest.json"));
  ASSERT_EQ(m["frames"].size(), 1u);
  EXPECT_EQ(m["class_counts"]["Consolidation"], 1);
  EXPECT_EQ(fixture::slurp(s.dir / "exp" / m["frames"][0]["label_file"].get<std::string>()),
            "5 0.468750 0.052083 0.937500 0.104167\n4 0.312500 0.520833 0.312500 0.625000\n");

  // the override now drives scoring
  const auto score = json::parse(run(triage("score --manifest " + quote(s.manifest))).out);
  EXPECT_EQ(score["videos"][0]["frames"][2]["severity"]["score"], 3);

  EXPECT_EQ(run(triage("override --manifest " + quote(s.manifest) +
                       " --frame missing --author a --annotations " + quote(s.dir / "ann.json")))
                .status,
            1);
}

TEST(Cli, BadInputsExitNonZero) {
  fixture::TempDir dir;
  EXPECT_EQ(run(triage("score --manifest " + quote(dir / "none.json"))).status, 1);
  EXPECT_NE(run(triage("score")).status, 0);
  EXPECT_NE(run(triage("")).status, 0);
}
