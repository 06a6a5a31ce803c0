// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/checkpoint.hpp"

#include "ecgjepa/byteio.hpp"
#include "ecgjepa/config.hpp"
#include "ecgjepa/ecgb.hpp"
#include "ecgjepa/error.hpp"

namespace ecgjepa {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'J', 'P', 'A'};

template <typename T>
void put_tensor(detail::ByteWriter& w, const std::string& name, const Tensor<T>& t, std::uint8_t dtype) {
  if (name.size() > 0xffff) throw ValidationError("tensor name too long: " + name);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.put_bytes(name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) w.put<std::uint32_t>(d);
  w.put<std::uint8_t>(dtype);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(t.value.size()) * sizeof(T));
  for (Eigen::Index i = 0; i < t.value.size(); ++i) w.put<T>(t.value.data()[i]);
}

template <typename T>
Tensor<T> get_payload(detail::ByteReader& r, const std::vector<std::uint32_t>& dims, std::uint64_t bytes,
                      const std::string& context, const std::string& name) {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  if (bytes != count * sizeof(T)) {
    throw FormatError(FormatError::Kind::Malformed,
                      context + ": tensor '" + name + "' payload size disagrees with its dims");
  }
  r.need(static_cast<std::size_t>(bytes));
  Tensor<T> t;
  t.dims = dims;
  const Eigen::Index rows = dims.size() == 2 ? dims[0] : 1;
  const Eigen::Index cols = dims.empty() ? 1 : dims.back();
  t.value.resize(rows, cols);
  for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = r.get<T>();
  return t;
}

void put_set(TensorFile& file, const std::string& prefix, const ParameterSet<float>& set) {
  for (const auto& [name, t] : set) file.f32.insert(prefix + name, t);
}

ParameterSet<float> take_set(const TensorFile& file, const std::string& prefix) {
  ParameterSet<float> out;
  for (const auto& [name, t] : file.f32) {
    if (name.rfind(prefix, 0) == 0) out.insert(name.substr(prefix.size()), t);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string meta = file.metadata.dump();
  w.put<std::uint64_t>(meta.size());
  w.put_bytes(meta);
  for (const auto& [name, t] : file.f32) {
    if (file.f64.contains(name)) throw ValidationError("tensor name used for both dtypes: " + name);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.f32.tensor_count() + file.f64.tensor_count()));
  for (const auto& [name, t] : file.f32) put_tensor(w, name, t, 0);
  for (const auto& [name, t] : file.f64) put_tensor(w, name, t, 1);
  return std::move(w.bytes());
}

TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != std::string_view(kMagic, 4)) {
    throw FormatError(FormatError::Kind::BadMagic, context + ": bad magic (not a checkpoint file)");
  }
  r.get_string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::UnsupportedVersion,
                      context + ": unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  TensorFile file;
  const auto meta_len = r.get<std::uint64_t>();
  r.need(static_cast<std::size_t>(meta_len));
  try {
    file.metadata = json::parse(r.get_string(static_cast<std::size_t>(meta_len)));
  } catch (const json::parse_error& e) {
    throw FormatError(FormatError::Kind::Malformed, context + ": metadata is not valid JSON: " + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = r.get_string(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    if (rank > 2) throw FormatError(FormatError::Kind::Malformed, context + ": tensor '" + name + "' has rank > 2");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint32_t>();
    const auto dtype = r.get<std::uint8_t>();
    const auto payload = r.get<std::uint64_t>();
    if (file.f32.contains(name) || file.f64.contains(name)) {
      throw FormatError(FormatError::Kind::Malformed, context + ": duplicate tensor '" + name + "'");
    }
    if (dtype == 0) {
      file.f32.insert(name, get_payload<float>(r, dims, payload, context, name));
    } else if (dtype == 1) {
      file.f64.insert(name, get_payload<double>(r, dims, payload, context, name));
    } else {
      throw FormatError(FormatError::Kind::Malformed,
                        context + ": tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
    }
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::Malformed, context + ": trailing bytes after tensors");
  return file;
}

TensorFile checkpoint_to_file(const Checkpoint& c) {
  const TrainingState& s = c.state;
  TensorFile file;
  file.metadata = {{"kind", "ecg-jepa-pretraining"},
                   {"model", to_json(s.model)},
                   {"train", to_json(s.train)},
                   {"step", s.step},
                   {"steps_per_epoch", s.steps_per_epoch},
                   {"rng_state", s.rng.state()},
                   {"optimizer_steps",
                    {{"student", s.student_optimizer.step_count()}, {"predictor", s.predictor_optimizer.step_count()}}},
                   {"info", c.info}};
  put_set(file, "student.", s.params.student);
  put_set(file, "teacher.", s.params.teacher);
  put_set(file, "predictor.", s.params.predictor);
  put_set(file, "optimizer.student.m.", s.student_optimizer.first_moment());
  put_set(file, "optimizer.student.v.", s.student_optimizer.second_moment());
  put_set(file, "optimizer.predictor.m.", s.predictor_optimizer.first_moment());
  put_set(file, "optimizer.predictor.v.", s.predictor_optimizer.second_moment());
  return file;
}

Checkpoint checkpoint_from_file(const TensorFile& file) {
  const json& m = file.metadata;
  Checkpoint c;
  TrainingState& s = c.state;
  try {
    s.model = model_config_from_json(m.at("model"));
    s.train = train_config_from_json(m.at("train"));
    s.step = m.at("step").get<std::int64_t>();
    s.steps_per_epoch = m.at("steps_per_epoch").get<std::int64_t>();
    s.rng.set_state(m.at("rng_state").get<std::string>());
    s.params.student = take_set(file, "student.");
    s.params.teacher = take_set(file, "teacher.");
    s.params.predictor = take_set(file, "predictor.");
    const auto& steps = m.at("optimizer_steps");
    s.student_optimizer = AdamW<float>(s.params.student);
    s.student_optimizer.restore(take_set(file, "optimizer.student.m."), take_set(file, "optimizer.student.v."),
                                steps.at("student").get<std::int64_t>());
    s.predictor_optimizer = AdamW<float>(s.params.predictor);
    s.predictor_optimizer.restore(take_set(file, "optimizer.predictor.m."), take_set(file, "optimizer.predictor.v."),
                                  steps.at("predictor").get<std::int64_t>());
    if (m.contains("info")) c.info = m.at("info");
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint inconsistent: ") + e.what());
  }
  if (!s.params.teacher.same_layout(s.params.student)) {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint inconsistent: teacher and student layouts differ");
  }
  Rng layout_rng(0);
  const auto expected = init_encoder_parameters<float>(s.model, layout_rng);
  if (!expected.same_layout(s.params.student)) {
    throw FormatError(FormatError::Kind::Malformed, "checkpoint inconsistent: encoder tensors do not match the model config");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_tensor_file(checkpoint_to_file(checkpoint)));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto file = decode_tensor_file(read_file_bytes(path), path.string());
  try {
    return checkpoint_from_file(file);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ecgjepa
