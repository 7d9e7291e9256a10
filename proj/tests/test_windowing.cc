// tests/test_windowing.cc

// Copyright 2026  Hearthside Audio Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "hearthside/common.h"
#include "hearthside/corpus.h"
#include "hearthside/wav.h"
#include "hearthside/windowing.h"

using namespace hearthside;
using namespace hearthside::corpus;
using namespace hearthside::windowing;

namespace {

Annotation Ann(SpeakerId s, std::optional<VocClass> v, Ms start, Ms end) {
  Annotation a;
  a.speaker = s;
  a.voc = v;
  a.start_ms = start;
  a.end_ms = end;
  return a;
}

// Independent reference labeler: walks the 1 ms grid tick by tick instead of
// doing interval arithmetic, so it shares no code path with the library.
WindowLabel OracleAssign(Ms start, const std::vector<Annotation>& anns) {
  const Ms end = start + kWindowMs;
  std::set<SpeakerId> speakers;
  for (const auto& a : anns) {
    if (a.start_ms < end && a.end_ms > start) speakers.insert(a.speaker);
  }
  if (speakers.size() >= 2) {
    return WindowLabel::Discard(DiscardReason::kMultiSpeaker);
  }
  if (speakers.empty()) return WindowLabel::Silence();

  using Key = std::pair<int, int>;  // (speaker, voc index + 1; 0 = none)
  struct Info {
    Ms win_cov = 0;
    Ms center_cov = 0;
    Ms earliest = std::numeric_limits<Ms>::max();
  };
  std::map<Key, Info> infos;
  for (const auto& a : anns) {
    if (a.start_ms < end && a.end_ms > start) {
      const Key k{static_cast<int>(a.speaker),
                  a.voc ? static_cast<int>(*a.voc) + 1 : 0};
      infos[k].earliest = std::min(infos[k].earliest, a.start_ms);
    }
  }
  const Ms c_lo = start + kCenterOffsetMs;
  const Ms c_hi = c_lo + kCenterLenMs;
  for (Ms t = start; t < end; ++t) {
    std::set<Key> covering;
    for (const auto& a : anns) {
      if (a.start_ms <= t && t < a.end_ms) {
        covering.insert({static_cast<int>(a.speaker),
                         a.voc ? static_cast<int>(*a.voc) + 1 : 0});
      }
    }
    for (const Key& k : covering) {
      ++infos[k].win_cov;
      if (t >= c_lo && t < c_hi) ++infos[k].center_cov;
    }
  }

  if (infos.size() >= 2) {
    const Key* best = nullptr;
    for (const auto& [k, info] : infos) {
      if (!best) {
        best = &k;
        continue;
      }
      const Info& b = infos.at(*best);
      if (info.center_cov > b.center_cov ||
          (info.center_cov == b.center_cov && info.earliest < b.earliest)) {
        best = &k;
      }
    }
    const auto speaker = static_cast<SpeakerId>(best->first);
    std::optional<VocClass> voc;
    if (best->second > 0) voc = static_cast<VocClass>(best->second - 1);
    return WindowLabel::Speech(speaker, voc);
  }
  const Info& only = infos.begin()->second;
  if (only.win_cov >= kDurableMs) {
    const Key& k = infos.begin()->first;
    std::optional<VocClass> voc;
    if (k.second > 0) voc = static_cast<VocClass>(k.second - 1);
    return WindowLabel::Speech(static_cast<SpeakerId>(k.first), voc);
  }
  return WindowLabel::Discard(DiscardReason::kNoDurableLabel);
}

std::optional<VocClass> RandomVocFor(SpeakerId s, Rng& rng) {
  switch (s) {
    case SpeakerId::kChn: {
      const VocClass child[] = {VocClass::kCry, VocClass::kFus, VocClass::kBab};
      return child[rng.UniformInt(3)];
    }
    case SpeakerId::kFan:
    case SpeakerId::kMan: {
      const VocClass adult[] = {VocClass::kCds, VocClass::kAds, VocClass::kLau,
                                VocClass::kSng};
      return adult[rng.UniformInt(4)];
    }
    case SpeakerId::kCxn:
      return std::nullopt;
  }
  return std::nullopt;
}

// Random annotation scene: per speaker, non-overlapping utterances.
std::vector<Annotation> RandomScene(Ms duration_ms, Rng& rng) {
  std::vector<Annotation> anns;
  for (SpeakerId s : {SpeakerId::kChn, SpeakerId::kFan, SpeakerId::kMan,
                      SpeakerId::kCxn}) {
    const int count = static_cast<int>(rng.UniformInt(4));  // 0..3
    std::vector<std::pair<Ms, Ms>> placed;
    for (int i = 0; i < count; ++i) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const Ms len = 50 + static_cast<Ms>(rng.UniformInt(2951));
        if (len >= duration_ms) continue;
        const Ms start = static_cast<Ms>(rng.UniformInt(duration_ms - len));
        bool clash = false;
        for (const auto& [ps, pe] : placed) {
          if (start < pe && start + len > ps) {
            clash = true;
            break;
          }
        }
        if (!clash) {
          placed.push_back({start, start + len});
          anns.push_back(Ann(s, RandomVocFor(s, rng), start, start + len));
          break;
        }
      }
    }
  }
  return anns;
}

}  // namespace

TEST_CASE("window enumeration walks the hop grid") {
  CHECK(EnumerateWindowStarts(SecondsToMs(600.0)).size() == 2991);
  CHECK(EnumerateWindowStarts(1999).empty());
  const auto one = EnumerateWindowStarts(2000);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 0);
  const auto starts = EnumerateWindowStarts(3000);
  REQUIRE(starts.size() == 6);  // 0,200,...,1000
  CHECK(starts.back() == 1000);
  const auto secs = EnumerateWindows(3.0);
  REQUIRE(secs.size() == 6);
  CHECK(secs[1] == doctest::Approx(0.2));
}

TEST_CASE("multi-speaker windows are discarded over the full extent") {
  // Overlap of the second speaker is far from the center but still discards.
  std::vector<Annotation> anns = {
      Ann(SpeakerId::kChn, VocClass::kBab, 500, 1500),
      Ann(SpeakerId::kFan, VocClass::kCds, 1950, 2100),
  };
  const auto label = AssignWindowLabel(0, anns);
  REQUIRE(label.is_discard());
  CHECK(label.reason == DiscardReason::kMultiSpeaker);
}

TEST_CASE("empty windows are silence") {
  CHECK(AssignWindowLabel(0, {}).is_silence());
  // An annotation that ends exactly at the window start does not overlap.
  std::vector<Annotation> anns = {Ann(SpeakerId::kChn, VocClass::kCry, 0, 1000)};
  CHECK(AssignWindowLabel(1000, anns).is_silence());
}

TEST_CASE("competing labels of one speaker resolve on the centered second") {
  // CRY dominates the window but BAB dominates [0.5, 1.5).
  std::vector<Annotation> anns = {
      Ann(SpeakerId::kChn, VocClass::kCry, 0, 600),
      Ann(SpeakerId::kChn, VocClass::kBab, 700, 1400),
      Ann(SpeakerId::kChn, VocClass::kCry, 1600, 2000),
  };
  const auto label = AssignWindowLabel(0, anns);
  REQUIRE(label.is_speech());
  CHECK(label.speaker == SpeakerId::kChn);
  CHECK(label.voc == VocClass::kBab);
}

TEST_CASE("competing-label ties go to the earlier start") {
  // Both labels cover 400 ms of the centered second; CRY starts earlier.
  std::vector<Annotation> anns = {
      Ann(SpeakerId::kChn, VocClass::kCry, 500, 900),
      Ann(SpeakerId::kChn, VocClass::kBab, 1100, 1500),
  };
  const auto label = AssignWindowLabel(0, anns);
  REQUIRE(label.is_speech());
  CHECK(label.voc == VocClass::kCry);
}

TEST_CASE("the centered rule applies even when center overlap is zero") {
  // Two labels, both entirely outside [0.5, 1.5): coverage ties at zero and
  // the earlier start still decides.
  std::vector<Annotation> anns = {
      Ann(SpeakerId::kChn, VocClass::kFus, 0, 300),
      Ann(SpeakerId::kChn, VocClass::kBab, 1700, 2000),
  };
  const auto label = AssignWindowLabel(0, anns);
  REQUIRE(label.is_speech());
  CHECK(label.voc == VocClass::kFus);
}

TEST_CASE("a lone label needs 0.2 s to stick") {
  std::vector<Annotation> anns = {Ann(SpeakerId::kMan, VocClass::kAds, 900, 1100)};
  CHECK(AssignWindowLabel(0, anns).is_speech());  // exactly 200 ms
  anns[0].end_ms = 1099;
  const auto label = AssignWindowLabel(0, anns);
  REQUIRE(label.is_discard());
  CHECK(label.reason == DiscardReason::kNoDurableLabel);
  // Coverage accumulates across split utterances of the same label.
  std::vector<Annotation> split = {
      Ann(SpeakerId::kMan, VocClass::kAds, 100, 250),
      Ann(SpeakerId::kMan, VocClass::kAds, 400, 450),
  };
  CHECK(AssignWindowLabel(0, split).is_speech());
}

TEST_CASE("random scenes agree with the millisecond-grid reference labeler") {
  Rng rng(2024);
  int scenarios_checked = 0, windows_checked = 0, mismatches = 0;
  for (int scenario = 0; scenario < 1000; ++scenario) {
    const Ms duration = 4000 + static_cast<Ms>(rng.UniformInt(4001));
    const auto anns = RandomScene(duration, rng);
    for (Ms start : EnumerateWindowStarts(duration)) {
      const auto got = AssignWindowLabel(start, anns);
      const auto want = OracleAssign(start, anns);
      if (!(got == want)) ++mismatches;
      ++windows_checked;
    }
    ++scenarios_checked;
  }
  CHECK(scenarios_checked == 1000);
  CHECK(windows_checked > 10000);
  CHECK(mismatches == 0);
}

TEST_CASE("class indices follow the documented order") {
  CHECK(SdClassOf(WindowLabel::Silence()) == 0);
  CHECK(SdClassOf(WindowLabel::Speech(SpeakerId::kChn, VocClass::kCry)) == 1);
  CHECK(SdClassOf(WindowLabel::Speech(SpeakerId::kFan, VocClass::kCds)) == 2);
  CHECK(SdClassOf(WindowLabel::Speech(SpeakerId::kMan, VocClass::kAds)) == 3);
  CHECK(SdClassOf(WindowLabel::Speech(SpeakerId::kCxn, std::nullopt)) == 4);
  CHECK_THROWS_AS(
      SdClassOf(WindowLabel::Discard(DiscardReason::kMultiSpeaker)), Error);

  CHECK(ChnClassOf(WindowLabel::Speech(SpeakerId::kChn, VocClass::kFus)) == 1);
  CHECK(!ChnClassOf(WindowLabel::Speech(SpeakerId::kFan, VocClass::kCds))
             .has_value());
  CHECK(AduClassOf(WindowLabel::Speech(SpeakerId::kMan, VocClass::kSng)) == 3);
  CHECK(AduClassOf(WindowLabel::Speech(SpeakerId::kFan, VocClass::kLau)) == 2);
  CHECK(!AduClassOf(WindowLabel::Speech(SpeakerId::kChn, VocClass::kCry))
             .has_value());
  CHECK(!AduClassOf(WindowLabel::Silence()).has_value());

  CHECK(std::string(kSdClassNames[1]) == "CHN");
  CHECK(std::string(kChnClassNames[2]) == "BAB");
  CHECK(std::string(kAduClassNames[0]) == "CDS");
}

namespace {

LabeledWindow MakeWin(const std::string& rec, Domain domain, int sd,
                      double amplitude, Ms start = 0) {
  LabeledWindow w;
  w.recording_id = rec;
  w.family_id = "fam_" + rec;
  w.start_ms = start;
  w.sample_rate_hz = 1600;
  w.samples.assign(3200, static_cast<float>(amplitude));
  w.sd_label = sd;
  w.domain = domain;
  return w;
}

}  // namespace

TEST_CASE("energy gate threshold is the quietest in-domain child window") {
  std::vector<LabeledWindow> windows = {
      MakeWin("in1", Domain::kIn, 1, 0.2),   // CHN, mse 0.04
      MakeWin("in2", Domain::kIn, 1, 0.1),   // CHN, mse 0.01  <- threshold
      MakeWin("in3", Domain::kIn, 2, 0.01),  // FAN, not part of threshold
  };
  const double threshold = MinChnEnergyThreshold(windows);
  CHECK(threshold == doctest::Approx(0.01).epsilon(1e-9));

  // Out-of-domain speech below the threshold drops.
  CHECK(!EnergyGateKeeps(MakeWin("o", Domain::kOut, 3, 0.05), threshold));
  // Out-of-domain speech above it survives.
  CHECK(EnergyGateKeeps(MakeWin("o", Domain::kOut, 3, 0.2), threshold));
  // Out-of-domain silence is exempt no matter how quiet.
  CHECK(EnergyGateKeeps(MakeWin("o", Domain::kOut, 0, 0.0), threshold));
  // In-domain windows are never gated.
  CHECK(EnergyGateKeeps(MakeWin("i", Domain::kIn, 1, 0.0), threshold));

  std::vector<LabeledWindow> no_chn = {MakeWin("x", Domain::kIn, 2, 0.1)};
  CHECK_THROWS_AS(MinChnEnergyThreshold(no_chn), Error);
}

TEST_CASE("vad finds tone islands and respects the length bounds") {
  const int rate = 1600;
  VadParams params;

  SUBCASE("steady tone splits at the maximum segment length") {
    Recording rec;
    rec.id = "tone";
    rec.family_id = "f";
    rec.sample_rate_hz = rate;
    rec.samples.resize(static_cast<std::size_t>(25 * rate));
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
      rec.samples[i] =
          0.5f * std::sin(2.0 * M_PI * 220.0 * static_cast<double>(i) / rate);
    }
    const auto segs = VadSegments(rec, params);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].start_ms == 0);
    CHECK(segs[0].end_ms == 10000);
    CHECK(segs[1].start_ms == 10000);
    CHECK(segs[1].end_ms == 20000);
    CHECK(segs[2].start_ms == 20000);
    CHECK(segs[2].end_ms > 24900);
    CHECK(segs[2].end_ms <= 25000);
  }

  SUBCASE("all-silent audio yields nothing") {
    Recording rec;
    rec.id = "zeros";
    rec.family_id = "f";
    rec.sample_rate_hz = rate;
    rec.samples.assign(static_cast<std::size_t>(30 * rate), 0.0f);
    CHECK(VadSegments(rec, params).empty());
  }

  SUBCASE("two tone islands give two segments") {
    Recording rec;
    rec.id = "islands";
    rec.family_id = "f";
    rec.sample_rate_hz = rate;
    rec.samples.assign(static_cast<std::size_t>(10 * rate), 0.0f);
    auto tone = [&](double from_s, double to_s) {
      for (std::size_t i = static_cast<std::size_t>(from_s * rate);
           i < static_cast<std::size_t>(to_s * rate); ++i) {
        rec.samples[i] =
            0.4f * std::sin(2.0 * M_PI * 330.0 * static_cast<double>(i) / rate);
      }
    };
    tone(0.0, 3.0);
    tone(8.0, 10.0);
    const auto segs = VadSegments(rec, params);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].start_ms == 0);
    CHECK(segs[0].end_ms > 2900);
    CHECK(segs[0].end_ms < 3300);
    CHECK(segs[1].start_ms > 7800);
    CHECK(segs[1].start_ms < 8100);
    CHECK(segs[1].end_ms > 9900);
    CHECK(segs[1].end_ms <= 10000);
  }

  SUBCASE("active runs shorter than the minimum are dropped") {
    Recording rec;
    rec.id = "blip";
    rec.family_id = "f";
    rec.sample_rate_hz = rate;
    rec.samples.assign(static_cast<std::size_t>(10 * rate), 0.0f);
    for (std::size_t i = static_cast<std::size_t>(5.0 * rate);
         i < static_cast<std::size_t>(5.5 * rate); ++i) {
      rec.samples[i] =
          0.4f * std::sin(2.0 * M_PI * 330.0 * static_cast<double>(i) / rate);
    }
    CHECK(VadSegments(rec, params).empty());
  }

  SUBCASE("audio shorter than one second is rejected") {
    Recording rec;
    rec.id = "short";
    rec.family_id = "f";
    rec.sample_rate_hz = rate;
    rec.samples.assign(static_cast<std::size_t>(rate / 2), 0.1f);
    CHECK_THROWS_AS(VadSegments(rec, params), Error);
  }

  SUBCASE("parameter validation") {
    VadParams bad = params;
    bad.energy_percentile = 101.0;
    CHECK_THROWS_AS(ValidateVadParams(bad), Error);
    bad = params;
    bad.min_segment_s = 11.0;  // above max_segment_s
    CHECK_THROWS_AS(ValidateVadParams(bad), Error);
    bad = params;
    bad.hop_s = 0.0;
    CHECK_THROWS_AS(ValidateVadParams(bad), Error);
  }
}

TEST_CASE("dataset construction slices windows and matches the labeler") {
  const int rate = 1600;
  Recording rec;
  rec.id = "rec1";
  rec.family_id = "famA";
  rec.domain = Domain::kIn;
  rec.sample_rate_hz = rate;
  rec.samples.resize(static_cast<std::size_t>(6 * rate));
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    rec.samples[i] =
        0.3f * std::sin(2.0 * M_PI * 200.0 * static_cast<double>(i) / rate);
  }
  const std::vector<Annotation> anns = {
      Ann(SpeakerId::kChn, VocClass::kBab, 1000, 3000),
      Ann(SpeakerId::kFan, VocClass::kCds, 4000, 4500),
  };

  BuildStats stats;
  const auto windows =
      BuildDataset({{rec, anns}}, BuildOptions{}, &stats);
  CHECK(stats.windows_total == 21);
  CHECK(stats.kept == windows.size());
  CHECK(stats.kept + stats.discarded_multi_speaker +
            stats.discarded_no_durable_label ==
        stats.windows_total);
  CHECK(stats.gated == 0);

  for (const auto& w : windows) {
    CHECK(w.samples.size() == static_cast<std::size_t>(2 * rate));
    CHECK(w.recording_id == "rec1");
    CHECK(w.family_id == "famA");
    const auto expect = AssignWindowLabel(w.start_ms, anns);
    REQUIRE(!expect.is_discard());
    CHECK(w.sd_label == SdClassOf(expect));
    CHECK(w.chn_label == ChnClassOf(expect));
    CHECK(w.adu_label == AduClassOf(expect));
    CHECK(w.tier_mask.sd);
    CHECK(w.tier_mask.chn == w.chn_label.has_value());
    CHECK(w.tier_mask.adu == w.adu_label.has_value());
    // Samples really are the slice starting at start_ms.
    const std::size_t off =
        static_cast<std::size_t>(w.start_ms) * rate / 1000;
    CHECK(w.samples[0] == rec.samples[off]);
    CHECK(w.samples.back() == rec.samples[off + 2 * rate - 1]);
  }

  // Unlabeled recordings are refused.
  AnnotatedRecording unlabeled{rec, std::nullopt};
  CHECK_THROWS_AS(BuildDataset({unlabeled}, BuildOptions{}), Error);
}

TEST_CASE("dataset files round-trip against the manifest") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hearthside_windowing_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const int rate = 1600;
  Recording rec;
  rec.id = "r1";
  rec.family_id = "famZ";
  rec.domain = Domain::kOut;
  rec.sample_rate_hz = rate;
  rec.samples.resize(static_cast<std::size_t>(5 * rate));
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    rec.samples[i] =
        0.2f * std::sin(2.0 * M_PI * 150.0 * static_cast<double>(i) / rate);
  }
  Wave wav;
  wav.sample_rate_hz = rate;
  wav.samples = rec.samples;
  WriteWav((dir / "r1.wav").string(), wav);

  const std::vector<Annotation> anns = {
      Ann(SpeakerId::kCxn, std::nullopt, 500, 2500)};
  const auto windows = BuildDataset({{rec, anns}}, BuildOptions{});
  REQUIRE(!windows.empty());
  SaveDataset(dir / "data.jsonl", windows);

  ManifestEntry entry;
  entry.id = "r1";
  entry.family_id = "famZ";
  entry.domain = Domain::kOut;
  entry.audio_path = dir / "r1.wav";
  const auto loaded = LoadDataset(dir / "data.jsonl", {entry});
  REQUIRE(loaded.size() == windows.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].recording_id == windows[i].recording_id);
    CHECK(loaded[i].start_ms == windows[i].start_ms);
    CHECK(loaded[i].sd_label == windows[i].sd_label);
    CHECK(loaded[i].chn_label == windows[i].chn_label);
    CHECK(loaded[i].adu_label == windows[i].adu_label);
    CHECK(loaded[i].domain == windows[i].domain);
    CHECK(loaded[i].tier_mask == windows[i].tier_mask);
    REQUIRE(loaded[i].samples.size() == windows[i].samples.size());
    // WAV quantization to 16-bit dominates the reconstruction error.
    for (std::size_t k = 0; k < loaded[i].samples.size(); k += 97) {
      CHECK(loaded[i].samples[k] ==
            doctest::Approx(windows[i].samples[k]).epsilon(1e-3));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("gated dataset drops quiet out-of-domain speech") {
  const int rate = 1600;
  auto make_rec = [&](const std::string& id, Domain d, float amp) {
    Recording r;
    r.id = id;
    r.family_id = "fam_" + id;
    r.domain = d;
    r.sample_rate_hz = rate;
    r.samples.assign(static_cast<std::size_t>(2 * rate), amp);
    return r;
  };
  // One in-domain CHN window at mse 0.04 sets the gate; the out-of-domain
  // recording's speech sits below it and gets dropped.
  const std::vector<Annotation> chn = {
      Ann(SpeakerId::kChn, VocClass::kCry, 0, 2000)};
  const std::vector<Annotation> man = {
      Ann(SpeakerId::kMan, VocClass::kAds, 0, 2000)};

  BuildStats stats;
  const auto windows = BuildDataset(
      {
          {make_rec("in", Domain::kIn, 0.2f), chn},
          {make_rec("out_quiet", Domain::kOut, 0.05f), man},
          {make_rec("out_loud", Domain::kOut, 0.5f), man},
      },
      BuildOptions{.apply_gate = true}, &stats);
  CHECK(stats.gated == 1);
  REQUIRE(windows.size() == 2);
  std::set<std::string> ids;
  for (const auto& w : windows) ids.insert(w.recording_id);
  CHECK(ids == std::set<std::string>{"in", "out_loud"});
}
