#pragma once

// Dataset schema and manifest I/O.
//
// A manifest is JSON Lines: a header object {"d_s", "d_t", "d_a", "n"}
// followed by one record object per line. Feature vectors are either inline
// arrays or {"file": path, "offset": row} references into sidecar binaries
// (see sidecar.hpp). Relative sidecar paths resolve against the manifest's
// directory.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmpoe {

enum class Language { kEnglish, kChinese };
enum class Gender { kFemale, kMale };

/// Class index 0 is MCI (the positive class), 1 is NC.
enum class Label : int { kMci = 0, kNc = 1 };

inline constexpr std::size_t kNumClasses = 2;
inline constexpr double kMmseMin = 0.0;
inline constexpr double kMmseMax = 30.0;

std::string_view to_string(Language language);
std::string_view to_string(Gender gender);
std::string_view to_string(Label label);
Language parse_language(std::string_view text);
Gender parse_gender(std::string_view text);
Label parse_label(std::string_view text);

inline constexpr std::size_t class_index(Label label) {
  return static_cast<std::size_t>(label);
}

/// Per-modality vector dimensions declared by a manifest header.
struct Dims {
  std::size_t speech = 0;
  std::size_t text = 0;
  std::size_t acoustic = 10;

  std::size_t fused() const { return speech + text + acoustic; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct FeatureRecord {
  std::string sample_id;
  std::string participant_id;
  Language language = Language::kEnglish;
  Gender gender = Gender::kFemale;
  double age = 0.0;
  Label label = Label::kNc;
  double mmse = 0.0;
  std::vector<double> speech_vec;
  std::vector<double> text_vec;
  std::vector<double> acoustic_vec;
};

struct DatasetManifest {
  Dims dims;
  std::vector<FeatureRecord> records;

  std::size_t size() const { return records.size(); }
};

/// Returns every violated record invariant; empty means the record is valid.
std::vector<std::string> validate_record(const FeatureRecord& rec, const Dims& dims);

/// Parses a manifest file, resolving sidecar references. Throws ManifestError
/// carrying the offending line number.
DatasetManifest parse_manifest(const std::filesystem::path& path);

/// Parses manifest text. Relative sidecar paths resolve against base_dir.
DatasetManifest parse_manifest_text(std::string_view text,
                                    const std::filesystem::path& base_dir);

/// How write_manifest stores feature vectors.
enum class VectorStorage {
  kInline,   // JSON arrays of doubles (shortest round-trip representation)
  kSidecar,  // float32 sidecar per modality next to the manifest
};

/// Writes a manifest. With kSidecar, writes <stem>.speech.bin, <stem>.text.bin
/// and <stem>.acoustic.bin beside the manifest and references them by row.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                    VectorStorage storage = VectorStorage::kInline);

/// Serialized manifest text with inline vectors.
std::string manifest_to_string(const DatasetManifest& manifest);

/// Subgroups reported alongside the overall ("Avg.") column.
enum class Subgroup { kAll = 0, kMale, kFemale, kEnglish, kChinese };
inline constexpr std::size_t kSubgroupCount = 5;
inline constexpr std::array<Subgroup, kSubgroupCount> kAllSubgroups = {
    Subgroup::kAll, Subgroup::kMale, Subgroup::kFemale, Subgroup::kEnglish,
    Subgroup::kChinese};

/// Column label: "Avg.", "M", "F", "En", "Zh".
std::string_view subgroup_label(Subgroup group);
/// JSON key: "all", "m", "f", "en", "zh".
std::string_view subgroup_key(Subgroup group);
bool in_subgroup(const FeatureRecord& rec, Subgroup group);

/// Record indices per demographic subgroup {M, F, En, Zh}. Each record lands
/// in exactly one gender group and one language group.
std::map<Subgroup, std::vector<std::size_t>> partition_by_subgroup(
    std::span<const FeatureRecord> records);

}  // namespace mmpoe
