// src/corpus.cc

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

#include "hearthside/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "hearthside/wav.h"

namespace hearthside {
namespace corpus {

using nlohmann::json;

const char* ToString(SpeakerId s) {
  switch (s) {
    case SpeakerId::kChn: return "CHN";
    case SpeakerId::kFan: return "FAN";
    case SpeakerId::kMan: return "MAN";
    case SpeakerId::kCxn: return "CXN";
  }
  return "?";
}

const char* ToString(VocClass v) {
  switch (v) {
    case VocClass::kCry: return "CRY";
    case VocClass::kFus: return "FUS";
    case VocClass::kBab: return "BAB";
    case VocClass::kCds: return "CDS";
    case VocClass::kAds: return "ADS";
    case VocClass::kLau: return "LAU";
    case VocClass::kSng: return "SNG";
  }
  return "?";
}

const char* ToString(Domain d) { return d == Domain::kIn ? "In" : "Out"; }

std::optional<SpeakerId> SpeakerFromString(const std::string& s) {
  if (s == "CHN") return SpeakerId::kChn;
  if (s == "FAN") return SpeakerId::kFan;
  if (s == "MAN") return SpeakerId::kMan;
  if (s == "CXN") return SpeakerId::kCxn;
  return std::nullopt;
}

std::optional<VocClass> VocFromString(const std::string& s) {
  if (s == "CRY") return VocClass::kCry;
  if (s == "FUS") return VocClass::kFus;
  if (s == "BAB") return VocClass::kBab;
  if (s == "CDS") return VocClass::kCds;
  if (s == "ADS") return VocClass::kAds;
  if (s == "LAU") return VocClass::kLau;
  if (s == "SNG") return VocClass::kSng;
  return std::nullopt;
}

std::optional<Domain> DomainFromString(const std::string& s) {
  if (s == "In") return Domain::kIn;
  if (s == "Out") return Domain::kOut;
  return std::nullopt;
}

bool IsChildVoc(VocClass v) {
  return v == VocClass::kCry || v == VocClass::kFus || v == VocClass::kBab;
}

bool IsAdultVoc(VocClass v) { return !IsChildVoc(v); }

bool IsLegalPair(SpeakerId speaker, const std::optional<VocClass>& voc) {
  switch (speaker) {
    case SpeakerId::kChn:
      return voc.has_value() && IsChildVoc(*voc);
    case SpeakerId::kFan:
    case SpeakerId::kMan:
      return voc.has_value() && IsAdultVoc(*voc);
    case SpeakerId::kCxn:
      return !voc.has_value();
  }
  return false;
}

void ValidateAnnotation(const Annotation& a, const std::string& context) {
  Require(a.start_ms >= 0, context + ": negative start time");
  Require(a.start_ms < a.end_ms, context + ": start >= end");
  if (!IsLegalPair(a.speaker, a.voc)) {
    throw ValidationError(context + ": illegal speaker/voc combination (" +
                          ToString(a.speaker) + "/" +
                          (a.voc ? ToString(*a.voc) : "-") + ")");
  }
}

void ValidateRecording(const Recording& r) {
  Require(r.sample_rate_hz > 0, "recording " + r.id + ": bad sample rate");
  for (float s : r.samples) {
    if (!std::isfinite(s) || s < -1.0f || s > 1.0f) {
      throw ValidationError("recording " + r.id +
                            ": sample out of [-1,1] or non-finite");
    }
  }
}

namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

Ms ParseTimeMs(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0' || s.empty() || !std::isfinite(v)) {
    throw ValidationError(context + ": non-numeric time '" + s + "'");
  }
  return SecondsToMs(v);
}

std::string FormatSeconds(Ms ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%03lld",
                static_cast<long long>(ms / 1000),
                static_cast<long long>(ms % 1000));
  return buf;
}

}  // namespace

std::vector<AnnotationRecord> ParseAnnotationFile(const std::string& text) {
  std::vector<AnnotationRecord> records;
  const auto lines = SplitLines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const std::string context = "annotation line " + std::to_string(i + 1);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 5) {
      throw ValidationError(context + ": expected 5 tab-separated fields, got " +
                            std::to_string(fields.size()));
    }
    AnnotationRecord rec;
    rec.recording_id = fields[0];
    Require(!rec.recording_id.empty(), context + ": empty recording id");
    const auto speaker = SpeakerFromString(fields[1]);
    if (!speaker) {
      throw ValidationError(context + ": unknown speaker '" + fields[1] + "'");
    }
    rec.annotation.speaker = *speaker;
    if (fields[2] != "-") {
      const auto voc = VocFromString(fields[2]);
      if (!voc) {
        throw ValidationError(context + ": unknown vocalization '" +
                              fields[2] + "'");
      }
      rec.annotation.voc = *voc;
    }
    rec.annotation.start_ms = ParseTimeMs(fields[3], context);
    rec.annotation.end_ms = ParseTimeMs(fields[4], context);
    ValidateAnnotation(rec.annotation, context);
    records.push_back(std::move(rec));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const AnnotationRecord& a, const AnnotationRecord& b) {
                     if (a.recording_id != b.recording_id)
                       return a.recording_id < b.recording_id;
                     if (a.annotation.start_ms != b.annotation.start_ms)
                       return a.annotation.start_ms < b.annotation.start_ms;
                     return a.annotation.end_ms < b.annotation.end_ms;
                   });
  return records;
}

std::string SerializeAnnotations(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    out += rec.recording_id;
    out += '\t';
    out += ToString(rec.annotation.speaker);
    out += '\t';
    out += rec.annotation.voc ? ToString(*rec.annotation.voc) : "-";
    out += '\t';
    out += FormatSeconds(rec.annotation.start_ms);
    out += '\t';
    out += FormatSeconds(rec.annotation.end_ms);
    out += '\n';
  }
  return out;
}

std::vector<Annotation> AnnotationsFor(const std::vector<AnnotationRecord>& all,
                                       const std::string& recording_id) {
  std::vector<Annotation> result;
  for (const auto& rec : all) {
    if (rec.recording_id == recording_id) result.push_back(rec.annotation);
  }
  return result;
}

FrameLabelSequence FramewiseLabels(const std::vector<Annotation>& annotations,
                                   double duration_s) {
  Require(duration_s > 0, "framewise labels need positive duration");
  const Ms dur = SecondsToMs(duration_s);
  FrameLabelSequence seq;
  const Ms frame = seq.frame_ms;
  const std::size_t n = static_cast<std::size_t>((dur + frame - 1) / frame);
  seq.labels.assign(n, SilenceFrame());
  for (std::size_t k = 0; k < n; ++k) {
    const Ms lo = frame * static_cast<Ms>(k);
    const Ms hi = lo + frame;
    Ms best_cover = 0;
    const Annotation* best = nullptr;
    for (const auto& a : annotations) {
      const Ms cover = std::max<Ms>(
          0, std::min(hi, a.end_ms) - std::max(lo, a.start_ms));
      if (cover == 0) continue;
      if (cover > best_cover ||
          (cover == best_cover && best != nullptr &&
           a.start_ms < best->start_ms)) {
        best_cover = cover;
        best = &a;
      }
    }
    if (best != nullptr) seq.labels[k] = SpeechFrame(best->speaker, best->voc);
  }
  return seq;
}

double CohenKappa(const FrameLabelSequence& a, const FrameLabelSequence& b) {
  Require(a.frame_ms == b.frame_ms, "kappa needs equal frame sizes");
  Require(a.labels.size() == b.labels.size(),
          "kappa needs equal-length sequences");
  Require(!a.labels.empty(), "kappa undefined on zero-length input");

  std::map<FrameLabel, int> index;
  auto id_of = [&index](const FrameLabel& l) {
    auto [it, _] = index.emplace(l, static_cast<int>(index.size()));
    return it->second;
  };
  const std::size_t n = a.labels.size();
  std::vector<double> freq_a, freq_b;
  std::size_t agree = 0;
  std::vector<std::pair<int, int>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ia = id_of(a.labels[i]);
    const int ib = id_of(b.labels[i]);
    pairs[i] = {ia, ib};
    if (ia == ib) ++agree;
  }
  freq_a.assign(index.size(), 0.0);
  freq_b.assign(index.size(), 0.0);
  for (auto [ia, ib] : pairs) {
    freq_a[ia] += 1.0;
    freq_b[ib] += 1.0;
  }
  const double dn = static_cast<double>(n);
  double pe = 0.0;
  for (std::size_t c = 0; c < index.size(); ++c) {
    pe += (freq_a[c] / dn) * (freq_b[c] / dn);
  }
  const double po = static_cast<double>(agree) / dn;
  if (pe >= 1.0) return 1.0;  // both coders constant and identical
  return (po - pe) / (1.0 - pe);
}

double CohenKappaFromFiles(const std::string& text_a,
                           const std::string& text_b) {
  const auto recs_a = ParseAnnotationFile(text_a);
  const auto recs_b = ParseAnnotationFile(text_b);
  std::set<std::string> ids;
  std::map<std::string, Ms> max_end;
  for (const auto& r : recs_a) {
    ids.insert(r.recording_id);
    max_end[r.recording_id] =
        std::max(max_end[r.recording_id], r.annotation.end_ms);
  }
  for (const auto& r : recs_b) {
    ids.insert(r.recording_id);
    max_end[r.recording_id] =
        std::max(max_end[r.recording_id], r.annotation.end_ms);
  }
  Require(!ids.empty(), "kappa: both annotation files are empty");

  FrameLabelSequence all_a, all_b;
  for (const auto& id : ids) {
    const double dur = MsToSeconds(max_end[id]);
    auto fa = FramewiseLabels(AnnotationsFor(recs_a, id), dur);
    auto fb = FramewiseLabels(AnnotationsFor(recs_b, id), dur);
    all_a.labels.insert(all_a.labels.end(), fa.labels.begin(), fa.labels.end());
    all_b.labels.insert(all_b.labels.end(), fb.labels.begin(), fb.labels.end());
  }
  return CohenKappa(all_a, all_b);
}

std::vector<ManifestEntry> LoadManifest(const std::filesystem::path& path) {
  const auto base = path.has_parent_path() ? path.parent_path()
                                           : std::filesystem::path(".");
  auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  std::vector<ManifestEntry> entries;
  const auto lines = SplitLines(ReadTextFile(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string context =
        path.string() + " line " + std::to_string(i + 1);
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw ValidationError(context + ": bad JSON: " + e.what());
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.family_id = j.at("family_id").get<std::string>();
      const auto dom = DomainFromString(j.at("domain").get<std::string>());
      Require(dom.has_value(), context + ": domain must be 'In' or 'Out'");
      e.domain = *dom;
      if (j.contains("age_months") && !j["age_months"].is_null()) {
        e.age_months = j["age_months"].get<double>();
      }
      e.audio_path = resolve(j.at("audio_path").get<std::string>());
      if (j.contains("annotation_path") && !j["annotation_path"].is_null()) {
        e.annotation_path = resolve(j["annotation_path"].get<std::string>());
      }
    } catch (const json::exception& ex) {
      throw ValidationError(context + ": " + ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void SaveManifest(const std::filesystem::path& path,
                  const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["family_id"] = e.family_id;
    j["domain"] = ToString(e.domain);
    if (e.age_months) j["age_months"] = *e.age_months;
    j["audio_path"] = e.audio_path.string();
    if (e.annotation_path) j["annotation_path"] = e.annotation_path->string();
    out += j.dump();
    out += '\n';
  }
  WriteTextFile(path, out);
}

Recording LoadRecording(const ManifestEntry& entry) {
  const Wave wave = ReadWav(entry.audio_path);
  Recording r;
  r.id = entry.id;
  r.family_id = entry.family_id;
  r.domain = entry.domain;
  r.age_months = entry.age_months;
  r.sample_rate_hz = wave.sample_rate_hz;
  r.samples = wave.samples;
  ValidateRecording(r);
  return r;
}

std::vector<Annotation> LoadAnnotations(const ManifestEntry& entry) {
  if (!entry.annotation_path) return {};
  const auto records = ParseAnnotationFile(ReadTextFile(*entry.annotation_path));
  return AnnotationsFor(records, entry.id);
}

}  // namespace corpus
}  // namespace hearthside
