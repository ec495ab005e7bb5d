#include "mmpoe/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mmpoe/error.hpp"
#include "mmpoe/sidecar.hpp"

namespace mmpoe {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 3> kVectorFields = {"speech_vec", "text_vec",
                                                           "acoustic_vec"};

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::size_t header_dim(const Json& header, const char* key, std::size_t line) {
  if (!header.contains(key) || !header[key].is_number_integer()) {
    throw ManifestError(line, std::string("header: missing integer field \"") + key + "\"");
  }
  const auto value = header[key].get<long long>();
  if (value <= 0) {
    throw ManifestError(line, std::string("header: ") + key + " must be positive");
  }
  return static_cast<std::size_t>(value);
}

template <class T>
T required(const Json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) {
    throw ManifestError(line, std::string("missing field \"") + key + "\"");
  }
  try {
    return obj[key].get<T>();
  } catch (const Json::exception&) {
    throw ManifestError(line, std::string("field \"") + key + "\" has the wrong type");
  }
}

// Resolves sidecar files once per parse.
class SidecarCache {
 public:
  explicit SidecarCache(std::filesystem::path base) : base_(std::move(base)) {}

  const SidecarBlock& get(const std::string& file, std::size_t line) {
    std::filesystem::path path(file);
    if (path.is_relative()) path = base_ / path;
    const std::string key = path.lexically_normal().string();
    auto it = blocks_.find(key);
    if (it == blocks_.end()) {
      try {
        it = blocks_.emplace(key, read_sidecar(path)).first;
      } catch (const ManifestError& e) {
        throw ManifestError(line, e.what());
      }
    }
    return it->second;
  }

 private:
  std::filesystem::path base_;
  std::unordered_map<std::string, SidecarBlock> blocks_;
};

std::vector<double> parse_vector(const Json& value, std::string_view field,
                                 std::size_t expected_dim, SidecarCache& cache,
                                 std::size_t line) {
  if (value.is_array()) {
    std::vector<double> out;
    out.reserve(value.size());
    for (const auto& entry : value) {
      if (!entry.is_number()) {
        throw ManifestError(line, std::string(field) + ": non-numeric entry");
      }
      out.push_back(entry.get<double>());
    }
    return out;
  }
  if (value.is_object() && value.contains("file")) {
    const auto file = required<std::string>(value, "file", line);
    const auto offset = value.contains("offset") ? required<long long>(value, "offset", line) : 0;
    const SidecarBlock& block = cache.get(file, line);
    if (block.dim != expected_dim) {
      throw ManifestError(line, std::string(field) + ": sidecar dim " +
                                    std::to_string(block.dim) + " does not match header dim " +
                                    std::to_string(expected_dim));
    }
    if (offset < 0 || static_cast<std::size_t>(offset) >= block.count) {
      throw ManifestError(line, std::string(field) + ": sidecar offset " +
                                    std::to_string(offset) + " out of range");
    }
    const auto row = block.row(static_cast<std::size_t>(offset));
    return {row.begin(), row.end()};
  }
  throw ManifestError(line, std::string(field) + ": expected array or {\"file\", \"offset\"}");
}

FeatureRecord parse_record(const Json& obj, const Dims& dims, SidecarCache& cache,
                           std::size_t line) {
  if (!obj.is_object()) throw ManifestError(line, "record is not a JSON object");
  FeatureRecord rec;
  rec.sample_id = required<std::string>(obj, "sample_id", line);
  rec.participant_id = obj.contains("participant_id")
                           ? required<std::string>(obj, "participant_id", line)
                           : rec.sample_id;
  try {
    rec.language = parse_language(required<std::string>(obj, "language", line));
    rec.gender = parse_gender(required<std::string>(obj, "gender", line));
    rec.label = parse_label(required<std::string>(obj, "label", line));
  } catch (const ConfigError& e) {
    throw ManifestError(line, e.what());
  }
  rec.age = required<double>(obj, "age", line);
  rec.mmse = required<double>(obj, "mmse", line);
  const std::array<std::size_t, 3> dim_for = {dims.speech, dims.text, dims.acoustic};
  std::array<std::vector<double>*, 3> slots = {&rec.speech_vec, &rec.text_vec,
                                               &rec.acoustic_vec};
  for (std::size_t i = 0; i < kVectorFields.size(); ++i) {
    const std::string key(kVectorFields[i]);
    if (!obj.contains(key)) throw ManifestError(line, "missing field \"" + key + "\"");
    *slots[i] = parse_vector(obj[key], kVectorFields[i], dim_for[i], cache, line);
  }
  return rec;
}

void check_vector(const std::vector<double>& vec, std::string_view name, std::size_t dim,
                  std::string_view dim_name, std::vector<std::string>& out) {
  if (vec.size() != dim) {
    out.push_back(std::string(name) + " dim " + std::to_string(vec.size()) + " != " +
                  std::string(dim_name) + " " + std::to_string(dim));
  }
  for (double v : vec) {
    if (!std::isfinite(v)) {
      out.push_back(std::string(name) + " has non-finite entries");
      break;
    }
  }
}

OrderedJson header_json(const DatasetManifest& manifest) {
  OrderedJson header;
  header["d_s"] = manifest.dims.speech;
  header["d_t"] = manifest.dims.text;
  header["d_a"] = manifest.dims.acoustic;
  header["n"] = manifest.records.size();
  return header;
}

OrderedJson record_json(const FeatureRecord& rec) {
  OrderedJson obj;
  obj["sample_id"] = rec.sample_id;
  obj["participant_id"] = rec.participant_id;
  obj["language"] = to_string(rec.language);
  obj["gender"] = to_string(rec.gender);
  obj["age"] = rec.age;
  obj["label"] = to_string(rec.label);
  obj["mmse"] = rec.mmse;
  return obj;
}

}  // namespace

std::string_view to_string(Language language) {
  return language == Language::kEnglish ? "en" : "zh";
}
std::string_view to_string(Gender gender) { return gender == Gender::kFemale ? "f" : "m"; }
std::string_view to_string(Label label) { return label == Label::kMci ? "mci" : "nc"; }

Language parse_language(std::string_view text) {
  if (text == "en") return Language::kEnglish;
  if (text == "zh") return Language::kChinese;
  throw ConfigError("unknown language \"" + std::string(text) + "\" (expected en|zh)");
}

Gender parse_gender(std::string_view text) {
  if (text == "f") return Gender::kFemale;
  if (text == "m") return Gender::kMale;
  throw ConfigError("unknown gender \"" + std::string(text) + "\" (expected f|m)");
}

Label parse_label(std::string_view text) {
  if (text == "mci") return Label::kMci;
  if (text == "nc") return Label::kNc;
  throw ConfigError("unknown label \"" + std::string(text) + "\" (expected mci|nc)");
}

std::vector<std::string> validate_record(const FeatureRecord& rec, const Dims& dims) {
  std::vector<std::string> out;
  if (rec.sample_id.empty()) out.emplace_back("sample_id is empty");
  if (!(rec.mmse >= kMmseMin && rec.mmse <= kMmseMax)) out.emplace_back("mmse out of range");
  if (!(rec.age > 0.0) || !std::isfinite(rec.age)) out.emplace_back("age must be positive");
  check_vector(rec.speech_vec, "speech_vec", dims.speech, "d_s", out);
  check_vector(rec.text_vec, "text_vec", dims.text, "d_t", out);
  check_vector(rec.acoustic_vec, "acoustic_vec", dims.acoustic, "d_a", out);
  return out;
}

DatasetManifest parse_manifest_text(std::string_view text,
                                    const std::filesystem::path& base_dir) {
  DatasetManifest manifest;
  SidecarCache cache(base_dir);
  std::unordered_set<std::string> seen_ids;
  bool have_header = false;
  std::size_t declared_n = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto raw = text.substr(pos, end == std::string_view::npos ? text.npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;

    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ManifestError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!have_header) {
      if (!obj.is_object()) throw ManifestError(line_no, "header is not a JSON object");
      manifest.dims.speech = header_dim(obj, "d_s", line_no);
      manifest.dims.text = header_dim(obj, "d_t", line_no);
      manifest.dims.acoustic = header_dim(obj, "d_a", line_no);
      if (!obj.contains("n") || !obj["n"].is_number_integer() || obj["n"].get<long long>() < 0) {
        throw ManifestError(line_no, "header: missing non-negative integer field \"n\"");
      }
      declared_n = obj["n"].get<std::size_t>();
      manifest.records.reserve(declared_n);
      have_header = true;
      continue;
    }
    FeatureRecord rec = parse_record(obj, manifest.dims, cache, line_no);
    const auto violations = validate_record(rec, manifest.dims);
    if (!violations.empty()) {
      std::string msg;
      for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
      throw ManifestError(line_no, msg);
    }
    if (!seen_ids.insert(rec.sample_id).second) {
      throw ManifestError(line_no, "duplicate sample_id \"" + rec.sample_id + "\"");
    }
    manifest.records.push_back(std::move(rec));
  }
  if (!have_header) throw ManifestError(0, "manifest has no header line");
  if (manifest.records.size() != declared_n) {
    throw ManifestError(0, "header declares n=" + std::to_string(declared_n) + " but " +
                               std::to_string(manifest.records.size()) + " records were parsed");
  }
  return manifest;
}

DatasetManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(0, "cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest_text(buffer.str(), path.parent_path());
}

std::string manifest_to_string(const DatasetManifest& manifest) {
  std::string out = header_json(manifest).dump() + "\n";
  for (const auto& rec : manifest.records) {
    OrderedJson obj = record_json(rec);
    obj["speech_vec"] = rec.speech_vec;
    obj["text_vec"] = rec.text_vec;
    obj["acoustic_vec"] = rec.acoustic_vec;
    out += obj.dump() + "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                    VectorStorage storage) {
  std::string text;
  if (storage == VectorStorage::kInline) {
    text = manifest_to_string(manifest);
  } else {
    const std::string stem = path.stem().string();
    const std::array<std::string, 3> files = {stem + ".speech.bin", stem + ".text.bin",
                                              stem + ".acoustic.bin"};
    const std::array<std::size_t, 3> dims = {manifest.dims.speech, manifest.dims.text,
                                             manifest.dims.acoustic};
    const std::array<std::vector<double> FeatureRecord::*, 3> members = {
        &FeatureRecord::speech_vec, &FeatureRecord::text_vec, &FeatureRecord::acoustic_vec};
    for (std::size_t m = 0; m < 3; ++m) {
      std::vector<std::vector<double>> rows;
      rows.reserve(manifest.records.size());
      for (const auto& rec : manifest.records) rows.push_back(rec.*members[m]);
      write_sidecar(path.parent_path() / files[m], static_cast<std::uint32_t>(dims[m]), rows);
    }
    text = header_json(manifest).dump() + "\n";
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      OrderedJson obj = record_json(manifest.records[i]);
      for (std::size_t m = 0; m < 3; ++m) {
        obj[std::string(kVectorFields[m])] = OrderedJson{{"file", files[m]}, {"offset", i}};
      }
      text += obj.dump() + "\n";
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string_view subgroup_label(Subgroup group) {
  switch (group) {
    case Subgroup::kAll: return "Avg.";
    case Subgroup::kMale: return "M";
    case Subgroup::kFemale: return "F";
    case Subgroup::kEnglish: return "En";
    case Subgroup::kChinese: return "Zh";
  }
  return "?";
}

std::string_view subgroup_key(Subgroup group) {
  switch (group) {
    case Subgroup::kAll: return "all";
    case Subgroup::kMale: return "m";
    case Subgroup::kFemale: return "f";
    case Subgroup::kEnglish: return "en";
    case Subgroup::kChinese: return "zh";
  }
  return "?";
}

bool in_subgroup(const FeatureRecord& rec, Subgroup group) {
  switch (group) {
    case Subgroup::kAll: return true;
    case Subgroup::kMale: return rec.gender == Gender::kMale;
    case Subgroup::kFemale: return rec.gender == Gender::kFemale;
    case Subgroup::kEnglish: return rec.language == Language::kEnglish;
    case Subgroup::kChinese: return rec.language == Language::kChinese;
  }
  return false;
}

std::map<Subgroup, std::vector<std::size_t>> partition_by_subgroup(
    std::span<const FeatureRecord> records) {
  std::map<Subgroup, std::vector<std::size_t>> groups = {{Subgroup::kMale, {}},
                                                         {Subgroup::kFemale, {}},
                                                         {Subgroup::kEnglish, {}},
                                                         {Subgroup::kChinese, {}}};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    groups[rec.gender == Gender::kMale ? Subgroup::kMale : Subgroup::kFemale].push_back(i);
    groups[rec.language == Language::kEnglish ? Subgroup::kEnglish : Subgroup::kChinese]
        .push_back(i);
  }
  return groups;
}

}  // namespace mmpoe
