#include "chain/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "chain/errors.hpp"

using nlohmann::json;

namespace chain {

namespace {

constexpr std::uint32_t kVersion = 1;

json config_to_json(const EncoderConfig& c) {
  return json{{"frame_dim", c.frame_dim},     {"model_dim", c.model_dim},
              {"num_layers", c.num_layers},   {"num_heads", c.num_heads},
              {"clip_length", c.clip_length}, {"code_bits", c.code_bits},
              {"raw_frames", c.raw_frames},   {"in_channels", c.in_channels},
              {"in_height", c.in_height},     {"in_width", c.in_width}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.frame_dim = j.at("frame_dim").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.clip_length = j.at("clip_length").get<int>();
  c.code_bits = j.at("code_bits").get<int>();
  c.raw_frames = j.at("raw_frames").get<bool>();
  c.in_channels = j.at("in_channels").get<int>();
  c.in_height = j.at("in_height").get<int>();
  c.in_width = j.at("in_width").get<int>();
  return c;
}

void append_tensor(json& table, std::vector<float>& blob, const std::string& name,
                   const Mat<float>& m) {
  table.push_back({{"name", name},
                   {"rows", m.rows()},
                   {"cols", m.cols()},
                   {"dtype", "f32"},
                   {"offset", blob.size()}});
  blob.insert(blob.end(), m.data(), m.data() + m.size());
}

Mat<float> read_tensor(const json& entry, const std::vector<float>& blob) {
  const auto rows = entry.at("rows").get<Eigen::Index>();
  const auto cols = entry.at("cols").get<Eigen::Index>();
  const auto offset = entry.at("offset").get<std::size_t>();
  if (entry.at("dtype").get<std::string>() != "f32")
    throw FormatError("checkpoint: unsupported tensor dtype");
  if (offset + static_cast<std::size_t>(rows * cols) > blob.size())
    throw FormatError("checkpoint: tensor payload out of range");
  Mat<float> m(rows, cols);
  std::memcpy(m.data(), blob.data() + offset, sizeof(float) * rows * cols);
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["version"] = kVersion;
  header["config"] = config_to_json(ckpt.model.cfg);
  header["epoch"] = ckpt.epoch;
  header["global_step"] = ckpt.global_step;
  header["seed"] = std::to_string(ckpt.seed);

  std::vector<float> blob;
  json tensors = json::array();
  ckpt.model.for_each_param([&](const std::string& name, const Mat<float>& p) {
    append_tensor(tensors, blob, name, p);
  });
  header["tensors"] = tensors;

  json opt;
  opt["t"] = ckpt.optimizer.t;
  opt["beta1"] = ckpt.optimizer.beta1;
  opt["beta2"] = ckpt.optimizer.beta2;
  opt["eps"] = ckpt.optimizer.eps;
  json moments = json::array();
  for (std::size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
    append_tensor(moments, blob, "m" + std::to_string(i), ckpt.optimizer.m[i]);
    append_tensor(moments, blob, "v" + std::to_string(i), ckpt.optimizer.v[i]);
  }
  opt["tensors"] = moments;
  header["optimizer"] = opt;

  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write("CHNC", 4);
  const std::uint32_t ver = kVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  const std::uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CHNC", 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  std::uint32_t ver = 0;
  if (!in.read(reinterpret_cast<char*>(&ver), 4) || ver != kVersion)
    throw FormatError("checkpoint: unsupported version in " + path);
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 8)) throw FormatError("checkpoint: truncated header");
  std::string head(len, '\0');
  if (!in.read(head.data(), static_cast<std::streamsize>(len)))
    throw FormatError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header json: ") + e.what());
  }
  std::vector<float> blob;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(float) != 0) throw FormatError("checkpoint: ragged payload");
    blob.resize(raw.size() / sizeof(float));
    std::memcpy(blob.data(), raw.data(), raw.size());
  }

  Checkpoint ckpt;
  ckpt.model.cfg = config_from_json(header.at("config"));
  ckpt.model.layers.resize(ckpt.model.cfg.num_layers);
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.global_step = header.at("global_step").get<long long>();
  ckpt.seed = std::stoull(header.at("seed").get<std::string>());

  const json& tensors = header.at("tensors");
  std::size_t ti = 0;
  ckpt.model.for_each_param([&](const std::string& name, Mat<float>& p) {
    if (ti >= tensors.size()) throw FormatError("checkpoint: missing tensor " + name);
    const json& entry = tensors[ti++];
    if (entry.at("name").get<std::string>() != name)
      throw FormatError("checkpoint: tensor order mismatch at " + name);
    p = read_tensor(entry, blob);
  });

  const json& opt = header.at("optimizer");
  ckpt.optimizer.t = opt.at("t").get<long long>();
  ckpt.optimizer.beta1 = opt.at("beta1").get<double>();
  ckpt.optimizer.beta2 = opt.at("beta2").get<double>();
  ckpt.optimizer.eps = opt.at("eps").get<double>();
  const json& moments = opt.at("tensors");
  for (std::size_t i = 0; i * 2 + 1 < moments.size(); ++i) {
    ckpt.optimizer.m.push_back(read_tensor(moments[i * 2], blob));
    ckpt.optimizer.v.push_back(read_tensor(moments[i * 2 + 1], blob));
  }
  return ckpt;
}

}  // namespace chain
