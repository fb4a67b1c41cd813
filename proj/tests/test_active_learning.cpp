#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lustriage/active_learning.hpp"
#include "lustriage/errors.hpp"
#include "lustriage/jsonl_log.hpp"
#include "lustriage/serialize.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lustriage;
using L = LandmarkClass;
namespace fs = std::filesystem;

namespace {

const std::string kNow = "2024-03-01T10:00:00Z";

// One video whose frames carry exactly the given class sets.
VideoAnalysis video_of(const std::string& id, const std::vector<LandmarkSet>& sets) {
  std::vector<FrameAnalysis> frames;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::vector<Detection> d;
    for (auto c : kAllClasses)
      if (sets[i].contains(c)) d.push_back({fixture::slot(c), c, 0.9});
    frames.push_back(score_annotations(id + "-f" + std::to_string(i), d));
  }
  return aggregate_video(id, std::move(frames));
}

OverrideRecord record(const std::string& frame, std::vector<Annotation> a,
                      const std::string& at = kNow) {
  return {frame, "dr-a", at, std::move(a), std::nullopt};
}

}  // namespace

TEST(SelectForRelabel, Examples) {
  const std::vector<VideoAnalysis> videos = {video_of(
      "v", {{}, {L::Pleura}, {L::Pleura, L::Rib, L::Shadow, L::BLines}, {L::Rib}, {L::Pleura, L::Rib}})};
  const auto sel = select_for_relabel(videos, QualityLabel::BelowAverage, {}, kNow);
  ASSERT_EQ(sel.size(), 3u);
  EXPECT_EQ(sel[0].frame_id, "v-f0");
  EXPECT_EQ(sel[0].reason, RelabelReason::LowQuality);
  EXPECT_EQ(sel[1].frame_id, "v-f1");
  EXPECT_EQ(sel[1].reason, RelabelReason::PleuraOnly);
  EXPECT_EQ(sel[2].frame_id, "v-f3");  // rib alone: 15 points
  EXPECT_EQ(sel[2].reason, RelabelReason::LowQuality);
  for (const auto& e : sel) {
    EXPECT_EQ(e.status, QueueStatus::Pending);
    EXPECT_EQ(e.video_id, "v");
    EXPECT_EQ(e.enqueued_at, kNow);
  }
}

TEST(SelectForRelabel, PleuraOnlyEvenWhenQualityPasses) {
  const std::vector<VideoAnalysis> videos = {video_of("v", {{L::Pleura}})};
  const auto sel = select_for_relabel(videos, QualityLabel::Bad, {}, kNow);
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0].reason, RelabelReason::PleuraOnly);
}

TEST(SelectForRelabel, FixpointAndNoDuplicatePending) {
  std::mt19937 rng(51);
  std::uniform_int_distribution<int> bits(0, 255), n(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VideoAnalysis> videos;
    for (int v = 0; v < 3; ++v) {
      std::vector<LandmarkSet> sets;
      for (int i = n(rng); i > 0; --i)
        sets.push_back(LandmarkSet::from_bits(static_cast<std::uint8_t>(bits(rng))));
      videos.push_back(video_of("v" + std::to_string(v), sets));
    }
    ReviewWorkspace ws;
    ws.enqueue_selected(videos, QualityLabel::BelowAverage, kNow);
    const auto before = ws.queue().entries();
    EXPECT_TRUE(ws.enqueue_selected(videos, QualityLabel::BelowAverage, kNow).empty());
    EXPECT_EQ(ws.queue().entries(), before);
    std::set<std::string> seen;
    for (const auto& e : ws.queue().entries()) EXPECT_TRUE(seen.insert(e.frame_id).second);
  }
}

TEST(Queue, Transitions) {
  RelabelQueue q;
  q.enqueue({"f", "v", RelabelReason::LowQuality, kNow, QueueStatus::Pending});
  EXPECT_THROW(q.enqueue({"f", "v", RelabelReason::PleuraOnly, kNow, QueueStatus::Pending}),
               ValidationError);
  EXPECT_THROW(q.enqueue({"g", "v", RelabelReason::PleuraOnly, kNow, QueueStatus::Reviewed}),
               ValidationError);
  EXPECT_THROW(q.mark_exported("f"), ValidationError);
  EXPECT_TRUE(q.mark_reviewed("f"));
  EXPECT_FALSE(q.mark_reviewed("f"));
  q.mark_exported("f");
  EXPECT_EQ(q.latest("f")->status, QueueStatus::Exported);
  EXPECT_THROW(q.mark_exported("f"), ValidationError);
  // a fresh cycle may start after export
  q.enqueue({"f", "v", RelabelReason::ClinicianFlag, kNow, QueueStatus::Pending});
  EXPECT_EQ(q.entries().size(), 2u);
  EXPECT_TRUE(q.has_pending("f"));
}

TEST(Override, Examples) {
  ReviewWorkspace ws;
  const ImageSize size{64, 48};
  auto out = ws.apply_override(
      record("f", {{L::Pleura, {0, 0, 60, 5}}, {L::BLines, {10, 10, 20, 40}}}), size, "v", {});
  EXPECT_EQ(out.rescored.severity.score, 1);
  out = ws.apply_override(
      record("f", {{L::Pleura, {0, 0, 60, 5}}, {L::BPatch, {10, 10, 20, 40}}}), size, "v", {});
  EXPECT_EQ(out.rescored.severity.score, 2);
  EXPECT_EQ(ws.effective_annotations("f")->at(1).cls, L::BPatch);  // latest wins

  out = ws.apply_override(record("f", {}), size, "v", {});
  EXPECT_TRUE(ws.effective_annotations("f")->empty());
  EXPECT_EQ(out.rescored.severity.score, -2);
  EXPECT_EQ(ws.overrides().size(), 3u);

  EXPECT_THROW(ws.apply_override(record("f", {{L::Rib, {0, 0, 65, 10}}}), size, "v", {}),
               ValidationError);
  EXPECT_EQ(ws.overrides().size(), 3u);
}

TEST(Override, MovesPendingEntryToReviewed) {
  ReviewWorkspace ws;
  const std::vector<VideoAnalysis> videos = {video_of("v", {{}})};
  ws.enqueue_selected(videos, QualityLabel::BelowAverage, kNow);
  ASSERT_EQ(ws.queue().latest("v-f0")->status, QueueStatus::Pending);
  ws.apply_override(record("v-f0", {{L::Pleura, {1, 1, 5, 5}}}), {64, 48}, "v", {});
  EXPECT_EQ(ws.queue().latest("v-f0")->status, QueueStatus::Reviewed);
  EXPECT_EQ(ws.queue().entries().size(), 1u);

  // unqueued frame: flagged and reviewed in one step
  ws.apply_override(record("other", {}), {64, 48}, "v", {});
  EXPECT_EQ(ws.queue().latest("other")->reason, RelabelReason::ClinicianFlag);
  EXPECT_EQ(ws.queue().latest("other")->status, QueueStatus::Reviewed);
}

TEST(Override, ReplayIsDeterministic) {
  std::mt19937 rng(52);
  std::uniform_int_distribution<int> frame(0, 5), n(0, 4), cls(0, 7);
  for (int trial = 0; trial < 30; ++trial) {
    fixture::TempDir dir;
    std::map<std::string, std::vector<Annotation>> last;  // oracle: last write per frame
    {
      auto ws = ReviewWorkspace::open(dir.path());
      for (int i = 0; i < 25; ++i) {
        const std::string f = "f" + std::to_string(frame(rng));
        std::vector<Annotation> a;
        for (int k = n(rng); k > 0; --k)
          a.push_back({class_from_id(cls(rng)), oracle::random_box(rng, 64, 48)});
        ws.apply_override(record(f, a, fmt::format("2024-03-01T10:{:02}:00Z", i)), {64, 48},
                          "v", {});
        last[f] = a;
      }
    }
    const auto reopened = ReviewWorkspace::open(dir.path());
    EXPECT_EQ(replay_overrides(reopened.overrides()), last);
    for (const auto& [f, a] : last) EXPECT_EQ(reopened.effective_annotations(f), a);
    for (const auto& [f, _] : last)
      EXPECT_EQ(reopened.queue().latest(f)->status, QueueStatus::Reviewed);
  }
}

TEST(JsonLines, TornTailIsIgnored) {
  fixture::TempDir dir;
  JsonLinesLog log(dir / "log.jsonl");
  EXPECT_TRUE(log.read_all().empty());
  log.append({{"a", 1}});
  log.append({{"a", 2}});
  std::ofstream(dir / "log.jsonl", std::ios::app) << R"({"a": 3)";
  const auto all = log.read_all();
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1]["a"], 2);
}

namespace {

struct ExportFixture {
  fixture::TempDir dir;
  std::map<std::string, ExportSource> sources;

  void add(const std::string& frame, std::vector<Annotation> a) {
    const auto img = dir / ("src/" + frame + ".png");
    fixture::write_png(img, 3);
    sources[frame] = {img, {64, 48}, std::move(a)};
  }
  ExportSourceFn fn() const {
    return [this](const std::string& f) -> std::optional<ExportSource> {
      auto it = sources.find(f);
      if (it == sources.end()) return std::nullopt;
      return it->second;
    };
  }
};

}  // namespace

TEST(Export, WritesLabelsImagesAndCounts) {
  ExportFixture fx;
  ReviewWorkspace ws;
  fx.add("a", {{L::Pleura, {1, 2, 30, 6}}, {L::Consolidation, {10, 10, 40, 40}}});
  fx.add("b", {{L::Pleura, {1, 2, 30, 6}}});
  fx.add("c", {});
  for (const auto& [f, src] : fx.sources)
    ws.apply_override(record(f, src.annotations), src.image_size, "v", {});

  const auto out = fx.dir / "export";
  const auto m = ws.export_reviewed(fx.fn(), out, ExportFormat::LabelText, kNow, {});
  ASSERT_EQ(m.frames.size(), 3u);
  EXPECT_EQ(m.class_counts.at("Pleura"), 2);
  EXPECT_EQ(m.class_counts.at("Consolidation"), 1);
  EXPECT_EQ(m.class_counts.at("BLines"), 0);
  EXPECT_EQ(m.class_counts.size(), 8u);

  std::map<std::string, int> recount;
  for (const auto& f : m.frames) {
    ASSERT_TRUE(fs::exists(out / f.image));
    const auto parsed = parse_label_file(fixture::slurp(out / f.label_file), {64, 48},
                                         LabelKind::GroundTruth);
    const auto& want = fx.sources.at(f.frame_id).annotations;
    ASSERT_EQ(parsed.detections.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(parsed.detections[i].cls, want[i].cls);
      EXPECT_NEAR(parsed.detections[i].box.x_min, want[i].box.x_min, 64e-4);
      EXPECT_NEAR(parsed.detections[i].box.y_max, want[i].box.y_max, 48e-4);
      ++recount[std::string(class_name(want[i].cls))];
    }
    if (f.frame_id == "a") {
      const auto text = fixture::slurp(out / f.label_file);
      EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
    }
  }
  for (const auto& [name, n] : recount) EXPECT_EQ(m.class_counts.at(name), n);

  const auto doc = nlohmann::json::parse(fixture::slurp(out / kExportManifestName));
  EXPECT_EQ(doc["format"], "label-text");
  EXPECT_EQ(doc["frames"].size(), 3u);
  for (const auto& e : ws.queue().entries()) EXPECT_EQ(e.status, QueueStatus::Exported);

  // nothing left to export
  const auto again = ws.export_reviewed(fx.fn(), fx.dir / "export2", ExportFormat::Xml, kNow, {});
  EXPECT_TRUE(again.frames.empty());
  EXPECT_TRUE(fs::exists(fx.dir / "export2" / kExportManifestName));
}

TEST(Export, XmlFormatRoundTrips) {
  ExportFixture fx;
  ReviewWorkspace ws;
  fx.add("x", {{L::BLines, {3, 4, 20, 30}}, {L::Pleura, {0, 0, 64, 6}}});
  ws.apply_override(record("x", fx.sources["x"].annotations), {64, 48}, "v", {});
  const auto m = ws.export_reviewed(fx.fn(), fx.dir / "e", ExportFormat::Xml, kNow, {});
  ASSERT_EQ(m.frames.size(), 1u);
  const auto back = parse_voc_xml(fixture::slurp(fx.dir / "e" / m.frames[0].label_file));
  EXPECT_EQ(back.detections, to_detections(fx.sources["x"].annotations));
}

TEST(Export, PendingEntriesAreNotExportedAndMissingSourceFails) {
  ExportFixture fx;
  ReviewWorkspace ws;
  const std::vector<VideoAnalysis> videos = {video_of("v", {{}})};
  ws.enqueue_selected(videos, QualityLabel::BelowAverage, kNow);
  auto m = ws.export_reviewed(fx.fn(), fx.dir / "e", ExportFormat::LabelText, kNow, {});
  EXPECT_TRUE(m.frames.empty());
  EXPECT_EQ(ws.queue().latest("v-f0")->status, QueueStatus::Pending);

  ws.apply_override(record("ghost", {}), {64, 48}, "v", {});
  EXPECT_THROW(ws.export_reviewed(fx.fn(), fx.dir / "e2", ExportFormat::LabelText, kNow, {}),
               ValidationError);
  EXPECT_EQ(ws.queue().latest("ghost")->status, QueueStatus::Reviewed);
}

TEST(OverrideJson, RoundTrip) {
  OverrideRecord r{"f", "dr-b", kNow, {{L::AirBronchogram, {1.5, 2, 3, 4.25}}}, "checked"};
  EXPECT_EQ(override_from_json(nlohmann::json(r)), r);
  nlohmann::json body = {{"frame_id", "f"}, {"author", "x"},
                         {"annotations", {{{"class", "b-patch"}, {"bbox", {0, 0, 1, 1}}}}}};
  EXPECT_THROW(override_from_json(body, false), ValidationError);
  body["annotations"][0]["class"] = "bpatch";
  EXPECT_EQ(override_from_json(body, false).annotations[0].cls, L::BPatch);
  EXPECT_THROW(override_from_json(body, true), ValidationError);
}
