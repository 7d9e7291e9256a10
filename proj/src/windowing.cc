// src/windowing.cc

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

#include "hearthside/windowing.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "hearthside/wav.h"

namespace hearthside {
namespace windowing {

using corpus::Annotation;
using corpus::Domain;
using corpus::Recording;
using corpus::SpeakerId;
using corpus::VocClass;
using nlohmann::json;

const std::array<const char*, kSdClasses> kSdClassNames = {
    "Silence", "CHN", "FAN", "MAN", "CXN"};
const std::array<const char*, kChnClasses> kChnClassNames = {"CRY", "FUS",
                                                             "BAB"};
const std::array<const char*, kAduClasses> kAduClassNames = {"CDS", "ADS",
                                                             "LAU", "SNG"};

int SdClassOf(const WindowLabel& label) {
  HS_CHECK(!label.is_discard()) << "discarded windows carry no SD target";
  if (label.is_silence()) return 0;
  switch (label.speaker) {
    case SpeakerId::kChn: return 1;
    case SpeakerId::kFan: return 2;
    case SpeakerId::kMan: return 3;
    case SpeakerId::kCxn: return 4;
  }
  return 0;
}

std::optional<int> ChnClassOf(const WindowLabel& label) {
  if (!label.is_speech() || label.speaker != SpeakerId::kChn) return {};
  HS_CHECK(label.voc.has_value()) << "CHN window lacks vocalization class";
  switch (*label.voc) {
    case VocClass::kCry: return 0;
    case VocClass::kFus: return 1;
    case VocClass::kBab: return 2;
    default: break;
  }
  throw Error("adult vocalization on a CHN window");
}

std::optional<int> AduClassOf(const WindowLabel& label) {
  if (!label.is_speech() ||
      (label.speaker != SpeakerId::kFan && label.speaker != SpeakerId::kMan)) {
    return {};
  }
  HS_CHECK(label.voc.has_value()) << "adult window lacks vocalization class";
  switch (*label.voc) {
    case VocClass::kCds: return 0;
    case VocClass::kAds: return 1;
    case VocClass::kLau: return 2;
    case VocClass::kSng: return 3;
    default: break;
  }
  throw Error("child vocalization on an adult window");
}

double MeanSquareEnergy(std::span<const float> samples) {
  Require(!samples.empty(), "energy of empty sample span");
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(samples.size());
}

std::vector<Ms> EnumerateWindowStarts(Ms duration_ms, Ms win_ms, Ms hop_ms) {
  HS_CHECK(win_ms > 0 && hop_ms > 0);
  std::vector<Ms> starts;
  if (duration_ms < win_ms) return starts;
  for (Ms s = 0; s + win_ms <= duration_ms; s += hop_ms) starts.push_back(s);
  return starts;
}

std::vector<double> EnumerateWindows(double duration_s, double win_s,
                                     double hop_s) {
  const auto starts = EnumerateWindowStarts(
      SecondsToMs(duration_s), SecondsToMs(win_s), SecondsToMs(hop_s));
  std::vector<double> out(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) out[i] = MsToSeconds(starts[i]);
  return out;
}

namespace {

inline Ms Overlap(Ms lo, Ms hi, Ms a_start, Ms a_end) {
  return std::max<Ms>(0, std::min(hi, a_end) - std::max(lo, a_start));
}

// A distinct (speaker, voc) pair; CXN maps voc to nullopt.
struct LabelKey {
  SpeakerId speaker;
  std::optional<VocClass> voc;
  auto operator<=>(const LabelKey&) const = default;
};

}  // namespace

WindowLabel AssignWindowLabel(Ms window_start_ms,
                              const std::vector<Annotation>& annotations,
                              Ms win_ms) {
  const Ms w_lo = window_start_ms;
  const Ms w_hi = window_start_ms + win_ms;
  const Ms c_lo = window_start_ms + kCenterOffsetMs;
  const Ms c_hi = c_lo + kCenterLenMs;

  // Coverage and earliest start per distinct label, overlapping speakers.
  std::set<SpeakerId> speakers;
  std::map<LabelKey, Ms> window_cover;
  std::map<LabelKey, Ms> center_cover;
  std::map<LabelKey, Ms> earliest_start;
  for (const auto& a : annotations) {
    const Ms cover = Overlap(w_lo, w_hi, a.start_ms, a.end_ms);
    if (cover == 0) continue;
    speakers.insert(a.speaker);
    const LabelKey key{a.speaker, a.voc};
    window_cover[key] += cover;
    center_cover[key] += Overlap(c_lo, c_hi, a.start_ms, a.end_ms);
    auto it = earliest_start.find(key);
    if (it == earliest_start.end() || a.start_ms < it->second) {
      earliest_start[key] = a.start_ms;
    }
  }

  if (speakers.size() >= 2) {
    return WindowLabel::Discard(DiscardReason::kMultiSpeaker);  // rule (a)
  }
  if (window_cover.empty()) {
    return WindowLabel::Silence();  // rule (b)
  }
  if (window_cover.size() >= 2) {
    // Rule (c): the centered interval decides, ties to the earlier start.
    const LabelKey* best = nullptr;
    Ms best_cover = -1;
    for (const auto& [key, _] : window_cover) {
      const Ms cc = center_cover[key];
      if (cc > best_cover ||
          (cc == best_cover && best != nullptr &&
           earliest_start[key] < earliest_start[*best])) {
        best_cover = cc;
        best = &key;
      }
    }
    return WindowLabel::Speech(best->speaker, best->voc);
  }
  // Rule (d): a single label must be durable within the full window.
  const auto& [key, cover] = *window_cover.begin();
  if (cover >= kDurableMs) return WindowLabel::Speech(key.speaker, key.voc);
  return WindowLabel::Discard(DiscardReason::kNoDurableLabel);
}

double MinChnEnergyThreshold(const std::vector<LabeledWindow>& windows) {
  double best = 0.0;
  bool found = false;
  for (const auto& w : windows) {
    if (w.domain != Domain::kIn || w.sd_label != 1) continue;
    const double e = MeanSquareEnergy(w.samples);
    if (!found || e < best) {
      best = e;
      found = true;
    }
  }
  Require(found, "energy gate threshold undefined: no in-domain CHN windows");
  return best;
}

bool EnergyGateKeeps(const LabeledWindow& window, double threshold) {
  HS_CHECK(threshold >= 0.0);
  if (window.domain != Domain::kOut) return true;
  if (window.is_silence()) return true;
  return MeanSquareEnergy(window.samples) >= threshold;
}

void ValidateVadParams(const VadParams& p) {
  Require(p.frame_len_s > 0 && p.hop_s > 0, "VAD frame/hop must be positive");
  Require(p.energy_percentile > 0 && p.energy_percentile < 100,
          "VAD percentile must lie in (0, 100)");
  Require(p.hangover_frames >= 0, "VAD hangover must be non-negative");
  Require(p.min_segment_s > 0 && p.min_segment_s <= p.max_segment_s,
          "VAD needs 0 < min_segment <= max_segment");
  Require(p.energy_floor >= 0, "VAD energy floor must be non-negative");
}

namespace {

double Percentile(std::vector<double> values, double pct) {
  HS_CHECK(!values.empty());
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace

std::vector<Segment> VadSegments(const Recording& recording,
                                 const VadParams& params) {
  ValidateVadParams(params);
  corpus::ValidateRecording(recording);
  Require(recording.DurationSeconds() >= 1.0,
          "VAD input shorter than 1 s: " + recording.id);

  const int rate = recording.sample_rate_hz;
  const std::size_t frame_len =
      static_cast<std::size_t>(std::lround(params.frame_len_s * rate));
  const std::size_t hop = static_cast<std::size_t>(std::lround(params.hop_s * rate));
  HS_CHECK(frame_len > 0 && hop > 0);
  const std::size_t n = recording.samples.size();
  if (n < frame_len) return {};
  const std::size_t n_frames = (n - frame_len) / hop + 1;

  constexpr double kLogEps = 1e-12;
  std::vector<double> log_e(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto* p = recording.samples.data() + f * hop;
    double acc = 0.0;
    for (std::size_t i = 0; i < frame_len; ++i) {
      acc += static_cast<double>(p[i]) * p[i];
    }
    log_e[f] = std::log(acc / static_cast<double>(frame_len) + kLogEps);
  }

  const double adaptive = Percentile(log_e, params.energy_percentile);
  const double threshold =
      std::max(adaptive, std::log(params.energy_floor + kLogEps));

  // Hangover: stay active for hangover_frames frames past the last speech
  // frame, which both extends runs and bridges short gaps.
  std::vector<bool> active(n_frames, false);
  long countdown = -1;
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (log_e[f] >= threshold) {
      countdown = params.hangover_frames;
      active[f] = true;
    } else if (countdown > 0) {
      active[f] = true;
      --countdown;
    }
  }

  const Ms duration_ms =
      static_cast<Ms>(n) * 1000 / static_cast<Ms>(rate);
  const Ms frame_len_ms = SecondsToMs(params.frame_len_s);
  const Ms hop_ms = SecondsToMs(params.hop_s);
  const Ms max_ms = SecondsToMs(params.max_segment_s);
  const Ms min_ms = SecondsToMs(params.min_segment_s);

  std::vector<Segment> segments;
  std::size_t f = 0;
  while (f < n_frames) {
    if (!active[f]) {
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g + 1 < n_frames && active[g + 1]) ++g;
    const Ms run_start = static_cast<Ms>(f) * hop_ms;
    const Ms run_end =
        std::min(duration_ms, static_cast<Ms>(g) * hop_ms + frame_len_ms);
    for (Ms s = run_start; s < run_end; s += max_ms) {
      const Ms e = std::min(run_end, s + max_ms);
      if (e - s >= min_ms) segments.push_back({s, e});
    }
    f = g + 1;
  }
  return segments;
}

namespace {

LabeledWindow MakeWindow(const Recording& rec, Ms start_ms,
                         const WindowLabel& label) {
  LabeledWindow w;
  w.recording_id = rec.id;
  w.family_id = rec.family_id;
  w.start_ms = start_ms;
  w.sample_rate_hz = rec.sample_rate_hz;
  const std::size_t begin = static_cast<std::size_t>(
      std::llround(static_cast<double>(start_ms) * rec.sample_rate_hz / 1000.0));
  const std::size_t len =
      static_cast<std::size_t>(kWindowMs) * rec.sample_rate_hz / 1000;
  HS_CHECK(begin + len <= rec.samples.size())
      << rec.id << " window at " << start_ms << " ms overruns the audio";
  w.samples.assign(rec.samples.begin() + begin, rec.samples.begin() + begin + len);
  w.sd_label = SdClassOf(label);
  w.chn_label = ChnClassOf(label);
  w.adu_label = AduClassOf(label);
  w.domain = rec.domain;
  w.tier_mask = TierMask{true, w.chn_label.has_value(), w.adu_label.has_value()};
  return w;
}

}  // namespace

std::vector<LabeledWindow> BuildDataset(
    const std::vector<AnnotatedRecording>& recordings,
    const BuildOptions& options, BuildStats* stats) {
  BuildStats local;
  std::vector<const AnnotatedRecording*> order;
  order.reserve(recordings.size());
  for (const auto& ar : recordings) order.push_back(&ar);
  std::sort(order.begin(), order.end(),
            [](const AnnotatedRecording* a, const AnnotatedRecording* b) {
              return a->recording.id < b->recording.id;
            });

  std::vector<LabeledWindow> windows;
  for (const auto* ar : order) {
    const Recording& rec = ar->recording;
    Require(ar->annotations.has_value(),
            "recording " + rec.id + " has no annotations; labeled windows "
            "cannot be built from unlabeled audio");
    corpus::ValidateRecording(rec);
    for (const auto& a : *ar->annotations) {
      corpus::ValidateAnnotation(a, "recording " + rec.id);
    }
    for (Ms start : EnumerateWindowStarts(rec.DurationMs())) {
      ++local.windows_total;
      const WindowLabel label = AssignWindowLabel(start, *ar->annotations);
      if (label.is_discard()) {
        if (label.reason == DiscardReason::kMultiSpeaker) {
          ++local.discarded_multi_speaker;
        } else {
          ++local.discarded_no_durable_label;
        }
        continue;
      }
      windows.push_back(MakeWindow(rec, start, label));
    }
  }

  if (options.apply_gate) {
    const double threshold = MinChnEnergyThreshold(windows);
    std::vector<LabeledWindow> kept;
    kept.reserve(windows.size());
    for (auto& w : windows) {
      if (EnergyGateKeeps(w, threshold)) {
        kept.push_back(std::move(w));
      } else {
        ++local.gated;
      }
    }
    windows = std::move(kept);
  }
  local.kept = windows.size();
  if (stats != nullptr) *stats = local;
  return windows;
}

void SaveDataset(const std::filesystem::path& path,
                 const std::vector<LabeledWindow>& windows) {
  std::string out;
  for (const auto& w : windows) {
    json j;
    j["recording_id"] = w.recording_id;
    j["start_s"] = MsToSeconds(w.start_ms);
    j["sd"] = kSdClassNames[static_cast<std::size_t>(w.sd_label)];
    if (w.chn_label) {
      j["chn"] = kChnClassNames[static_cast<std::size_t>(*w.chn_label)];
    }
    if (w.adu_label) {
      j["adu"] = kAduClassNames[static_cast<std::size_t>(*w.adu_label)];
    }
    j["domain"] = corpus::ToString(w.domain);
    out += j.dump();
    out += '\n';
  }
  WriteTextFile(path, out);
}

std::vector<LabeledWindow> LoadDataset(
    const std::filesystem::path& path,
    const std::vector<corpus::ManifestEntry>& manifest) {
  std::map<std::string, const corpus::ManifestEntry*> by_id;
  for (const auto& e : manifest) by_id[e.id] = &e;

  // Audio is cached per recording id; datasets are grouped by recording.
  std::string cached_id;
  Recording cached;

  auto name_index = [](const auto& names, const std::string& s,
                       const std::string& context) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (s == names[i]) return static_cast<int>(i);
    }
    throw ValidationError(context + ": unknown class '" + s + "'");
  };

  std::vector<LabeledWindow> windows;
  const auto lines = SplitLines(ReadTextFile(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string context = path.string() + " line " + std::to_string(i + 1);
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw ValidationError(context + ": bad JSON: " + e.what());
    }
    const std::string rec_id = j.at("recording_id").get<std::string>();
    auto it = by_id.find(rec_id);
    Require(it != by_id.end(), context + ": recording '" + rec_id +
                                   "' missing from manifest");
    if (cached_id != rec_id) {
      cached = corpus::LoadRecording(*it->second);
      cached_id = rec_id;
    }
    LabeledWindow w;
    w.recording_id = rec_id;
    w.family_id = it->second->family_id;
    w.start_ms = SecondsToMs(j.at("start_s").get<double>());
    w.sample_rate_hz = cached.sample_rate_hz;
    const std::size_t begin = static_cast<std::size_t>(std::llround(
        static_cast<double>(w.start_ms) * cached.sample_rate_hz / 1000.0));
    const std::size_t len = static_cast<std::size_t>(kWindowMs) *
                            cached.sample_rate_hz / 1000;
    Require(begin + len <= cached.samples.size(),
            context + ": window overruns the audio");
    w.samples.assign(cached.samples.begin() + begin,
                     cached.samples.begin() + begin + len);
    w.sd_label = name_index(kSdClassNames, j.at("sd").get<std::string>(), context);
    if (j.contains("chn") && !j["chn"].is_null()) {
      w.chn_label = name_index(kChnClassNames, j["chn"].get<std::string>(), context);
    }
    if (j.contains("adu") && !j["adu"].is_null()) {
      w.adu_label = name_index(kAduClassNames, j["adu"].get<std::string>(), context);
    }
    const auto dom = corpus::DomainFromString(j.at("domain").get<std::string>());
    Require(dom.has_value(), context + ": domain must be 'In' or 'Out'");
    w.domain = *dom;
    w.tier_mask = TierMask{true, w.chn_label.has_value(), w.adu_label.has_value()};
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace windowing
}  // namespace hearthside
