// hearthside/corpus.h

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

#ifndef HEARTHSIDE_CORPUS_H_
#define HEARTHSIDE_CORPUS_H_

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hearthside/common.h"

namespace hearthside {
namespace corpus {

// Exactly four speaker roles exist in the label scheme.
enum class SpeakerId { kChn, kFan, kMan, kCxn };

// Vocalization classes. The child subset is legal only with CHN; the adult
// subset only with FAN or MAN. CXN never carries a vocalization class.
enum class VocClass {
  // child
  kCry,
  kFus,
  kBab,
  // adult
  kCds,
  kAds,
  kLau,
  kSng,
};

enum class Domain { kIn, kOut };

const char* ToString(SpeakerId s);
const char* ToString(VocClass v);
const char* ToString(Domain d);
std::optional<SpeakerId> SpeakerFromString(const std::string& s);
std::optional<VocClass> VocFromString(const std::string& s);
std::optional<Domain> DomainFromString(const std::string& s);

bool IsChildVoc(VocClass v);
bool IsAdultVoc(VocClass v);
// True iff the (speaker, voc) combination is legal, including the
// CXN-has-no-voc rule.
bool IsLegalPair(SpeakerId speaker, const std::optional<VocClass>& voc);

// One human-annotated interval. Times are canonical in integer milliseconds;
// all downstream interval arithmetic is exact on that grid.
struct Annotation {
  SpeakerId speaker = SpeakerId::kChn;
  std::optional<VocClass> voc;
  Ms start_ms = 0;
  Ms end_ms = 0;

  double start_s() const { return MsToSeconds(start_ms); }
  double end_s() const { return MsToSeconds(end_ms); }

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Validates interval ordering and the speaker/voc legality rules.
// Throws ValidationError with |context| prepended on failure.
void ValidateAnnotation(const Annotation& a, const std::string& context);

struct Recording {
  std::string id;
  std::string family_id;
  Domain domain = Domain::kIn;
  std::optional<double> age_months;
  int sample_rate_hz = 0;
  std::vector<float> samples;

  double DurationSeconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
  Ms DurationMs() const {
    return static_cast<Ms>(samples.size()) * 1000 / sample_rate_hz;
  }
};

// Checks rate > 0 and samples finite within [-1, 1].
void ValidateRecording(const Recording& r);

// ---------------------------------------------------------------------------
// Annotation interchange: tab-separated lines
//   recording_id \t speaker \t voc_or_dash \t start_s \t end_s
// '#'-prefixed lines are comments; blank lines are skipped.

struct AnnotationRecord {
  std::string recording_id;
  Annotation annotation;

  friend bool operator==(const AnnotationRecord&,
                         const AnnotationRecord&) = default;
};

// Parses a whole file. Any malformed line throws ValidationError naming the
// 1-based line number. Output is sorted by (recording_id, start, end).
std::vector<AnnotationRecord> ParseAnnotationFile(const std::string& text);

// Inverse of ParseAnnotationFile: times printed with millisecond precision,
// so serialize -> parse is the identity.
std::string SerializeAnnotations(const std::vector<AnnotationRecord>& records);

// Convenience: annotations of one recording, in file order.
std::vector<Annotation> AnnotationsFor(const std::vector<AnnotationRecord>& all,
                                       const std::string& recording_id);

// ---------------------------------------------------------------------------
// Frame labels on the 0.2 s coder grid.

struct FrameLabel {
  bool silence = true;
  SpeakerId speaker = SpeakerId::kChn;  // valid iff !silence
  std::optional<VocClass> voc;          // valid iff !silence

  friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
  friend auto operator<=>(const FrameLabel&, const FrameLabel&) = default;
};

inline FrameLabel SilenceFrame() { return FrameLabel{}; }
inline FrameLabel SpeechFrame(SpeakerId s, std::optional<VocClass> v) {
  return FrameLabel{false, s, std::move(v)};
}

struct FrameLabelSequence {
  Ms frame_ms = 200;
  std::vector<FrameLabel> labels;
};

// Frame k covers [frame·k, frame·(k+1)). Each frame takes the label of the
// annotation covering the largest part of it (ties: earlier annotation
// start); silence when nothing overlaps. Length = ceil(duration / frame).
FrameLabelSequence FramewiseLabels(const std::vector<Annotation>& annotations,
                                   double duration_s);

// Chance-corrected agreement between two equal-length label sequences.
// Both coders constant and identical (p_e = 1) returns 1 by convention.
// Zero-length input throws.
double CohenKappa(const FrameLabelSequence& a, const FrameLabelSequence& b);

// Framewise kappa across two annotation files covering the same recordings.
// Frames are concatenated over the union of recording ids (sorted); the
// grid length per recording covers the later of the two coders' last ends.
double CohenKappaFromFiles(const std::string& text_a,
                           const std::string& text_b);

// ---------------------------------------------------------------------------
// Corpus manifest: one JSON object per line
//   {id, family_id, domain, age_months, audio_path, annotation_path?}

struct ManifestEntry {
  std::string id;
  std::string family_id;
  Domain domain = Domain::kIn;
  std::optional<double> age_months;
  std::filesystem::path audio_path;
  std::optional<std::filesystem::path> annotation_path;
};

// Relative paths in the manifest resolve against the manifest's directory.
std::vector<ManifestEntry> LoadManifest(const std::filesystem::path& path);
void SaveManifest(const std::filesystem::path& path,
                  const std::vector<ManifestEntry>& entries);

// Reads the WAV and fills Recording metadata from the entry.
Recording LoadRecording(const ManifestEntry& entry);

// Parses the entry's annotation file and returns this recording's intervals.
// Entries without an annotation path yield an empty list.
std::vector<Annotation> LoadAnnotations(const ManifestEntry& entry);

}  // namespace corpus
}  // namespace hearthside

#endif  // HEARTHSIDE_CORPUS_H_
