#include <limits>

#include <json.hpp>

#include "binary_io.hpp"
#include "contourcnn/errors.hpp"
#include "contourcnn/training.hpp"

namespace contourcnn {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "CCNTCKPT";

json model_to_json(const ModelConfig& c) {
  return {{"f_in", c.f_in},
          {"f_out", c.f_out},
          {"conv_channels", c.conv_channels},
          {"conv_kernel_size", c.conv_kernel_size},
          {"pooling_targets", c.pooling_targets},
          {"pooling_variant", to_string(c.pooling_variant)},
          {"pooling_window", c.pooling_window},
          {"activation", to_string(c.activation)},
          {"hidden_fc", c.hidden_fc},
          {"use_length_norm", c.use_length_norm}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.f_in = j.at("f_in").get<Index>();
  c.f_out = j.at("f_out").get<Index>();
  c.conv_channels = j.at("conv_channels").get<std::vector<Index>>();
  c.conv_kernel_size = j.at("conv_kernel_size").get<Index>();
  c.pooling_targets = j.at("pooling_targets").get<std::vector<Index>>();
  c.pooling_variant = parse_pooling_variant(j.at("pooling_variant").get<std::string>());
  c.pooling_window = j.at("pooling_window").get<Index>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.hidden_fc = j.at("hidden_fc").get<Index>();
  c.use_length_norm = j.at("use_length_norm").get<bool>();
  return c;
}

// NaN is not representable in JSON; it is stored as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

void write_blob(detail::ByteWriter& w, const std::string& name, const Matrix& m) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["model"] = model_to_json(ckpt.model);
  header["representation"] = to_string(ckpt.representation);
  header["epoch"] = ckpt.epoch;
  json history = json::array();
  for (const auto& m : ckpt.history) {
    history.push_back({{"epoch", m.epoch},
                       {"train_loss", number_or_null(m.train_loss)},
                       {"test_accuracy", number_or_null(m.test_accuracy)}});
  }
  header["history"] = std::move(history);
  header["parameter_count"] = ckpt.parameters.size();
  header["optimizer"] = ckpt.optimizer ? json{{"kind", "adam"}, {"step", ckpt.optimizer->step}} : json(nullptr);
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& p : ckpt.parameters) write_blob(w, p.name, p.value);
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != ckpt.parameters.size() || ckpt.optimizer->v.size() != ckpt.parameters.size()) {
      throw CheckpointError("checkpoint_save: optimizer state does not match parameters");
    }
    for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) {
      write_blob(w, "adam.m." + ckpt.parameters[i].name, ckpt.optimizer->m[i]);
      write_blob(w, "adam.v." + ckpt.parameters[i].name, ckpt.optimizer->v[i]);
    }
  }
  w.seal();
  if (!detail::write_file_atomic(path, w.data())) throw CheckpointError("cannot write " + path.string());
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::string data;
  if (!detail::read_file(path, data)) throw CheckpointError("cannot open " + where);
  auto fail = [&](std::size_t offset, const char* what) -> void {
    throw CheckpointError(where + " at byte " + std::to_string(offset) + ": truncated " + what);
  };
  if (data.size() < kMagic.size() + 12) throw CheckpointError(where + ": file too short for a checkpoint");
  if (std::string_view(data).substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError(where + ": not a checkpoint file");
  }
  {
    detail::ByteReader head(std::string_view(data).substr(kMagic.size()), fail);
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(where + ": checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
  }
  const std::string_view body(data.data(), data.size() - 4);
  detail::ByteReader tail(std::string_view(data).substr(data.size() - 4), fail);
  if (tail.u32() != detail::crc32_of(body)) throw CheckpointError(where + ": checksum mismatch");

  detail::ByteReader r(body, fail);
  r.bytes(kMagic.size());
  r.u32();
  const std::uint32_t header_len = r.u32();
  Checkpoint ckpt;
  std::size_t param_count = 0;
  std::optional<long long> adam_step;
  try {
    const json header = json::parse(r.bytes(header_len));
    ckpt.model = model_from_json(header.at("model"));
    ckpt.representation = parse_representation(header.at("representation").get<std::string>());
    ckpt.epoch = header.at("epoch").get<Index>();
    for (const auto& m : header.at("history")) {
      ckpt.history.push_back(
          {m.at("epoch").get<Index>(), number_from(m.at("train_loss")), number_from(m.at("test_accuracy"))});
    }
    param_count = header.at("parameter_count").get<std::size_t>();
    const json& opt = header.at("optimizer");
    if (!opt.is_null()) adam_step = opt.at("step").get<long long>();
  } catch (const json::exception& e) {
    throw CheckpointError(where + ": malformed header: " + e.what());
  } catch (const UsageError& e) {
    throw CheckpointError(where + ": malformed header: " + e.what());
  }

  auto read_blob = [&](const std::string& expected) {
    const std::uint16_t n = r.u16();
    const std::string name(r.bytes(n));
    if (!expected.empty() && name != expected) {
      throw CheckpointError(where + ": expected tensor '" + expected + "', found '" + name + "'");
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (r.remaining() / 8 / std::max<std::uint32_t>(cols, 1) < rows) fail(r.offset(), "tensor data");
    Parameter p{name, Matrix(rows, cols)};
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = r.f64();
    return p;
  };
  for (std::size_t i = 0; i < param_count; ++i) ckpt.parameters.push_back(read_blob(""));
  if (adam_step) {
    AdamState st;
    st.step = *adam_step;
    for (const auto& p : ckpt.parameters) {
      st.m.push_back(read_blob("adam.m." + p.name).value);
      st.v.push_back(read_blob("adam.v." + p.name).value);
    }
    ckpt.optimizer = std::move(st);
  }
  if (r.remaining() != 0) throw CheckpointError(where + ": trailing bytes after tensors");
  try {
    (void)ckpt.network();
  } catch (const UsageError& e) {
    throw CheckpointError(where + ": " + e.what());
  }
  return ckpt;
}

}  // namespace contourcnn
