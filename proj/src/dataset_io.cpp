#include "wseg/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wseg/tensor_io.hpp"

namespace wseg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_map(const fs::path& path, Dims dims, std::span<const double> values, std::uint32_t channels = 0) {
  std::vector<std::uint32_t> shape = {static_cast<std::uint32_t>(dims.height),
                                      static_cast<std::uint32_t>(dims.width)};
  if (channels) shape.push_back(channels);
  write_tensor(path, make_tensor(std::move(shape), values));
}

std::vector<double> read_map(const fs::path& path, Dims& dims, std::uint32_t channels = 0) {
  const Tensor t = read_tensor(path);
  const std::size_t rank = channels ? 3 : 2;
  if (t.shape.size() != rank || (channels && t.shape[2] != channels)) {
    throw FormatError(path.string() + ": unexpected tensor shape");
  }
  dims = Dims{static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1])};
  return std::vector<double>(t.values.begin(), t.values.end());
}

SegMask read_mask(const fs::path& path, const LabelSpace& space) {
  Dims dims;
  const auto values = read_map(path, dims);
  std::vector<Label> labels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) labels[i] = static_cast<Label>(std::lround(values[i]));
  return SegMask(dims, std::move(labels), space);
}

std::string tensor_name(const std::string& id, const char* kind) {
  return "tensors/" + id + "_" + kind + ".wst";
}

ordered_json record_json(const SceneRecord& rec, const char* split) {
  ordered_json j;
  j["id"] = rec.id;
  j["labels"] = rec.labels.ids();
  j["split"] = split;
  j["image"] = tensor_name(rec.id, "image");
  j["gt"] = tensor_name(rec.id, "gt");
  j["saliency"] = nullptr;
  j["attention"] = nullptr;
  j["pred_class"] = nullptr;
  j["pred_prob"] = nullptr;
  j["width"] = rec.source_width;
  j["height"] = rec.source_height;
  return j;
}

void write_scene(const fs::path& dir, const SceneRecord& rec) {
  write_map(dir / tensor_name(rec.id, "image"), rec.image.dims(), rec.image.values(), 3);
  std::vector<double> gt(rec.gt.labels().begin(), rec.gt.labels().end());
  write_map(dir / tensor_name(rec.id, "gt"), rec.gt.dims(), gt);
}

SceneRecord read_scene(const fs::path& dir, const nlohmann::json& j, const LabelSpace& space) {
  Dims dims;
  auto rgb = read_map(dir / j.at("image").get<std::string>(), dims, 3);
  SceneRecord rec{j.at("id").get<std::string>(),
                  Image(dims, std::move(rgb)),
                  LabelSet(j.at("labels").get<std::vector<Label>>(), space),
                  read_mask(dir / j.at("gt").get<std::string>(), space),
                  j.value("width", 0),
                  j.value("height", 0)};
  if (rec.gt.dims() != rec.image.dims()) throw FormatError(rec.id + ": image and gt sizes differ");
  return rec;
}

}  // namespace

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_dataset(const fs::path& dir, const SyntheticDataset& ds, const DatasetConfig& cfg) {
  fs::create_directories(dir / "tensors");

  ordered_json meta;
  meta["num_classes"] = ds.space.num_classes();
  meta["class_names"] = ds.space.names();
  meta["ignore_label"] = ds.space.ignore_label();
  meta["height"] = cfg.dims.height;
  meta["width"] = cfg.dims.width;
  meta["noise_level"] = cfg.noise_level;
  meta["seed"] = cfg.seed;
  write_text_file(dir / "dataset.json", meta.dump(2) + "\n");

  std::ostringstream manifest;
  for (const auto& s : ds.simple) {
    write_scene(dir, s.scene);
    write_map(dir / tensor_name(s.scene.id, "saliency"), s.cues.saliency.dims(), s.cues.saliency.values());
    write_map(dir / tensor_name(s.scene.id, "attention"), s.cues.attention.dims(), s.cues.attention.values());
    ordered_json j = record_json(s.scene, "simple");
    j["saliency"] = tensor_name(s.scene.id, "saliency");
    j["attention"] = tensor_name(s.scene.id, "attention");
    j["pred_class"] = s.cues.predicted_class;
    j["pred_prob"] = s.cues.predicted_prob;
    manifest << j.dump() << '\n';
  }
  for (const auto& rec : ds.complex) {
    write_scene(dir, rec);
    manifest << record_json(rec, "complex").dump() << '\n';
  }
  for (const auto& rec : ds.val) {
    write_scene(dir, rec);
    manifest << record_json(rec, "val").dump() << '\n';
  }
  write_text_file(dir / "manifest.jsonl", manifest.str());
}

SyntheticDataset load_dataset(const fs::path& dir) {
  const auto meta = nlohmann::json::parse(read_text_file(dir / "dataset.json"));
  auto names = meta.at("class_names").get<std::vector<std::string>>();
  if (names.size() < 2) throw FormatError("dataset.json: class_names needs background plus classes");
  names.erase(names.begin());
  SyntheticDataset ds{LabelSpace(std::move(names), meta.value("ignore_label", kDefaultIgnoreLabel)),
                      {}, {}, {}};

  std::istringstream lines(read_text_file(dir / "manifest.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto split = j.at("split").get<std::string>();
    SceneRecord rec = read_scene(dir, j, ds.space);
    if (split == "simple") {
      Dims sd, ad;
      auto sal = read_map(dir / j.at("saliency").get<std::string>(), sd);
      auto att = read_map(dir / j.at("attention").get<std::string>(), ad);
      CueRecord cues{rec.id,
                     CueMap(sd, std::move(sal)),
                     CueMap(ad, std::move(att)),
                     rec.labels.ids().front(),
                     j.at("pred_class").get<Label>(),
                     j.at("pred_prob").get<double>()};
      ds.simple.push_back({std::move(rec), std::move(cues)});
    } else if (split == "complex") {
      ds.complex.push_back(std::move(rec));
    } else if (split == "val") {
      ds.val.push_back(std::move(rec));
    } else {
      throw FormatError("manifest: unknown split '" + split + "'");
    }
  }
  return ds;
}

fs::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  p.replace_extension(".json");
  return p;
}

void save_params(const fs::path& tensor_path, const SegmenterParams& params) {
  write_tensor(tensor_path, make_tensor({static_cast<std::uint32_t>(params.num_labels()),
                                         static_cast<std::uint32_t>(params.dim())},
                                        params.weights()));
  ordered_json side;
  side["d"] = params.dim();
  side["num_labels"] = params.num_labels();
  side["feature_version"] = kFeatureVersion;
  write_text_file(sidecar_path(tensor_path), side.dump(2) + "\n");
}

SegmenterParams load_params(const fs::path& tensor_path) {
  const Tensor t = read_tensor(tensor_path);
  const auto side = nlohmann::json::parse(read_text_file(sidecar_path(tensor_path)));
  const int d = side.at("d").get<int>();
  const int labels = side.at("num_labels").get<int>();
  if (side.at("feature_version").get<std::string>() != kFeatureVersion) {
    throw FormatError(tensor_path.string() + ": feature version mismatch");
  }
  if (t.shape.size() != 2 || static_cast<int>(t.shape[0]) != labels ||
      static_cast<int>(t.shape[1]) != d) {
    throw FormatError(tensor_path.string() + ": tensor shape disagrees with sidecar");
  }
  return SegmenterParams(labels, d, std::vector<double>(t.values.begin(), t.values.end()));
}

}  // namespace wseg
