// hearthside/windowing.h

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

#ifndef HEARTHSIDE_WINDOWING_H_
#define HEARTHSIDE_WINDOWING_H_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hearthside/common.h"
#include "hearthside/corpus.h"

namespace hearthside {
namespace windowing {

// Window geometry. All boundary rules live on the 1 ms grid, so every
// comparison below is exact integer arithmetic.
inline constexpr Ms kWindowMs = 2000;
inline constexpr Ms kHopMs = 200;
// Centered sub-interval used by the competing-label rule: [start+0.5, start+1.5].
inline constexpr Ms kCenterOffsetMs = 500;
inline constexpr Ms kCenterLenMs = 1000;
// A lone label must cover at least this much of the window to stick.
inline constexpr Ms kDurableMs = 200;

enum class DiscardReason { kMultiSpeaker, kBelowEnergyGate, kNoDurableLabel };

struct WindowLabel {
  enum class Kind { kSilence, kSpeech, kDiscard };
  Kind kind = Kind::kSilence;
  corpus::SpeakerId speaker = corpus::SpeakerId::kChn;  // kSpeech only
  std::optional<corpus::VocClass> voc;                  // kSpeech only
  DiscardReason reason = DiscardReason::kMultiSpeaker;  // kDiscard only

  static WindowLabel Silence() { return {}; }
  static WindowLabel Speech(corpus::SpeakerId s,
                            std::optional<corpus::VocClass> v) {
    WindowLabel l;
    l.kind = Kind::kSpeech;
    l.speaker = s;
    l.voc = std::move(v);
    return l;
  }
  static WindowLabel Discard(DiscardReason r) {
    WindowLabel l;
    l.kind = Kind::kDiscard;
    l.reason = r;
    return l;
  }

  bool is_silence() const { return kind == Kind::kSilence; }
  bool is_speech() const { return kind == Kind::kSpeech; }
  bool is_discard() const { return kind == Kind::kDiscard; }

  friend bool operator==(const WindowLabel&, const WindowLabel&) = default;
};

// Classification targets per tier.
// SD: 0=Silence 1=CHN 2=FAN 3=MAN 4=CXN.
// CHN: 0=CRY 1=FUS 2=BAB. ADU: 0=CDS 1=ADS 2=LAU 3=SNG.
inline constexpr int kSdClasses = 5;
inline constexpr int kChnClasses = 3;
inline constexpr int kAduClasses = 4;
inline constexpr int kDomainClasses = 2;

extern const std::array<const char*, kSdClasses> kSdClassNames;
extern const std::array<const char*, kChnClasses> kChnClassNames;
extern const std::array<const char*, kAduClasses> kAduClassNames;

int SdClassOf(const WindowLabel& label);                 // label not Discard
std::optional<int> ChnClassOf(const WindowLabel& label);  // iff speaker CHN
std::optional<int> AduClassOf(const WindowLabel& label);  // iff FAN or MAN

struct TierMask {
  bool sd = true;
  bool chn = true;
  bool adu = true;

  friend bool operator==(const TierMask&, const TierMask&) = default;
};

// One 2 s training example. samples.size() == 2 s x sample_rate always.
struct LabeledWindow {
  std::string recording_id;
  std::string family_id;
  Ms start_ms = 0;
  int sample_rate_hz = 0;
  std::vector<float> samples;
  int sd_label = 0;
  std::optional<int> chn_label;
  std::optional<int> adu_label;
  corpus::Domain domain = corpus::Domain::kIn;
  TierMask tier_mask;

  double start_s() const { return MsToSeconds(start_ms); }
  bool is_silence() const { return sd_label == 0; }
};

// Mean-square amplitude; the energy notion used by gating and VAD.
double MeanSquareEnergy(std::span<const float> samples);

// Sliding 2 s / 0.2 s enumeration. start + win <= duration on the ms grid;
// duration < win yields an empty list.
std::vector<Ms> EnumerateWindowStarts(Ms duration_ms, Ms win_ms = kWindowMs,
                                      Ms hop_ms = kHopMs);
std::vector<double> EnumerateWindows(double duration_s, double win_s = 2.0,
                                     double hop_s = 0.2);

// The labeling rule, in order:
//   (a) two or more distinct speakers overlap the 2 s window -> Discard;
//   (b) nothing overlaps -> Silence;
//   (c) two or more distinct (speaker, voc) labels overlap -> the label with
//       the largest coverage of the centered 1 s sub-interval wins, ties to
//       the earlier annotation start;
//   (d) exactly one label -> keep iff it covers >= 0.2 s of the window,
//       else Discard (a sub-threshold vocalization is not silence).
WindowLabel AssignWindowLabel(Ms window_start_ms,
                              const std::vector<corpus::Annotation>& annotations,
                              Ms win_ms = kWindowMs);

// Minimum mean-square energy over in-domain CHN windows; the gate threshold.
// Throws if no in-domain CHN window exists.
double MinChnEnergyThreshold(const std::vector<LabeledWindow>& windows);

// Drop rule: out-of-domain AND non-silent AND energy < threshold.
// In-domain windows are never gated.
bool EnergyGateKeeps(const LabeledWindow& window, double threshold);

struct VadParams {
  double frame_len_s = 0.025;
  double hop_s = 0.010;
  double energy_percentile = 30.0;
  int hangover_frames = 5;
  double max_segment_s = 10.0;
  double min_segment_s = 1.0;
  // Absolute mean-square floor under the adaptive threshold; a percentile of
  // an all-silent recording would otherwise label silence as speech.
  double energy_floor = 1e-6;
};

void ValidateVadParams(const VadParams& p);

struct Segment {
  Ms start_ms = 0;
  Ms end_ms = 0;
  double start_s() const { return MsToSeconds(start_ms); }
  double end_s() const { return MsToSeconds(end_ms); }
};

// Percentile-adaptive log-energy VAD with hangover smoothing. Active runs
// longer than max_segment_s are chopped into consecutive max-length pieces;
// pieces shorter than min_segment_s are dropped.
std::vector<Segment> VadSegments(const corpus::Recording& recording,
                                 const VadParams& params);

// A recording paired with its annotations. nullopt annotations mean the
// recording is unlabeled; build_dataset refuses those.
struct AnnotatedRecording {
  corpus::Recording recording;
  std::optional<std::vector<corpus::Annotation>> annotations;
};

struct BuildOptions {
  bool apply_gate = false;
};

struct BuildStats {
  std::size_t windows_total = 0;
  std::size_t discarded_multi_speaker = 0;
  std::size_t discarded_no_durable_label = 0;
  std::size_t gated = 0;
  std::size_t kept = 0;
};

// Enumerate + label + slice every recording, drop Discards, then apply the
// energy gate if requested (threshold from this dataset's in-domain CHN
// windows). Output sorted by (recording_id, start).
std::vector<LabeledWindow> BuildDataset(
    const std::vector<AnnotatedRecording>& recordings,
    const BuildOptions& options, BuildStats* stats = nullptr);

// Dataset export: one JSON object per line
//   {recording_id, start_s, sd, chn?, adu?, domain}
// Audio is not embedded; LoadDataset re-slices it from the manifest's WAVs.
void SaveDataset(const std::filesystem::path& path,
                 const std::vector<LabeledWindow>& windows);
std::vector<LabeledWindow> LoadDataset(
    const std::filesystem::path& path,
    const std::vector<corpus::ManifestEntry>& manifest);

}  // namespace windowing
}  // namespace hearthside

#endif  // HEARTHSIDE_WINDOWING_H_
