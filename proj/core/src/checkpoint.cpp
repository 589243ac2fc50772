// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wdda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include <json.hpp>

namespace wdda {

namespace {

constexpr char kMagic[4] = {'W', 'D', 'D', 'A'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void record(const std::string& name, const Shape& shape,
              std::span<const double> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) u32(static_cast<std::uint32_t>(e));
    for (double v : values) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> in) : in_(in) {}
  bool done() const { return pos_ == in_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

struct Record {
  Shape shape;
  std::vector<double> values;
};

std::string moment_name(const std::string& opt, const std::string& param,
                        const char* which) {
  return "adam." + opt + "." + param + "." + which;
}

Record take(std::map<std::string, Record>& records, const std::string& name,
            std::size_t numel) {
  auto it = records.find(name);
  if (it == records.end()) throw CheckpointError("missing record '" + name + "'");
  Record r = std::move(it->second);
  records.erase(it);
  if (r.values.size() != numel) {
    throw CheckpointError("record '" + name + "' has " +
                          std::to_string(r.values.size()) + " values, expected " +
                          std::to_string(numel));
  }
  return r;
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta;
  meta["phase"] = ck.phase;
  meta["step"] = ck.step;
  meta["config"] = serialize_alignment(ck.config);
  meta["optimizers"] = nlohmann::json::array();
  for (const NamedAdam& o : ck.optimizers) {
    const AdamOptions& a = o.state.options;
    meta["optimizers"].push_back({{"name", o.name},
                                  {"step", o.state.step},
                                  {"lr", a.lr},
                                  {"beta1", a.beta1},
                                  {"beta2", a.beta2},
                                  {"eps", a.eps},
                                  {"params", o.params}});
  }
  const std::string json = meta.dump();

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(json.size()));
  w.bytes(json.data(), json.size());

  std::map<std::string, Shape> shapes;
  for (const Network* net : ck.models.networks()) {
    for (const auto& p : net->parameters()) {
      w.record(p.name, p.tensor.shape(), p.tensor.data());
      shapes[p.name] = p.tensor.shape();
    }
    const auto& sn = net->spectral_states();
    for (std::size_t i = 0; i < sn.size(); ++i) {
      if (sn[i].u.empty()) continue;
      w.record(net->spectral_state_name(i), {static_cast<int>(sn[i].u.size())},
               sn[i].u);
    }
  }
  for (const NamedAdam& o : ck.optimizers) {
    if (o.params.size() != o.state.m.size() ||
        o.params.size() != o.state.v.size()) {
      throw CheckpointError("optimizer '" + o.name + "' is inconsistent");
    }
    for (std::size_t i = 0; i < o.params.size(); ++i) {
      auto it = shapes.find(o.params[i]);
      if (it == shapes.end()) {
        throw CheckpointError("optimizer '" + o.name +
                              "' refers to unknown parameter '" + o.params[i] +
                              "'");
      }
      w.record(moment_name(o.name, o.params[i], "m"), it->second, o.state.m[i]);
      w.record(moment_name(o.name, o.params[i], "v"), it->second, o.state.v[i]);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic bytes)");
  }
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }

  std::map<std::string, Record> records;
  while (!r.done()) {
    const std::string name = r.str(r.u32());
    Record rec;
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("record '" + name + "' has rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) rec.shape.push_back(static_cast<int>(r.u32()));
    const std::size_t n = shape_numel(rec.shape);
    rec.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      rec.values[i] = static_cast<double>(std::bit_cast<float>(r.u32()));
    }
    if (!records.emplace(name, std::move(rec)).second) {
      throw CheckpointError("duplicate record '" + name + "'");
    }
  }

  Checkpoint ck;
  try {
    ck.config = parse_alignment(meta.at("config").get<std::string>());
    ck.phase = meta.at("phase").get<std::string>();
    ck.step = meta.at("step").get<std::int64_t>();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  ck.models = build_models(ck.config);

  for (Network* net : ck.models.networks()) {
    for (auto& p : net->parameters()) {
      Record rec = take(records, p.name, p.tensor.numel());
      if (rec.shape != p.tensor.shape()) {
        throw CheckpointError("record '" + p.name + "' has shape " +
                              shape_to_string(rec.shape) + ", expected " +
                              shape_to_string(p.tensor.shape()));
      }
      auto dst = p.tensor.mutable_data();
      std::copy(rec.values.begin(), rec.values.end(), dst.begin());
    }
    auto& sn = net->spectral_states();
    for (std::size_t i = 0; i < sn.size(); ++i) {
      if (sn[i].u.empty()) continue;
      sn[i].u = take(records, net->spectral_state_name(i), sn[i].u.size()).values;
    }
  }

  for (const auto& o : meta.at("optimizers")) {
    NamedAdam a;
    a.name = o.at("name").get<std::string>();
    a.params = o.at("params").get<std::vector<std::string>>();
    a.state.step = o.at("step").get<std::int64_t>();
    a.state.options = {o.at("lr").get<double>(), o.at("beta1").get<double>(),
                       o.at("beta2").get<double>(), o.at("eps").get<double>()};
    for (const auto& p : a.params) {
      Tensor* t = ck.models.find_parameter(p);
      if (!t) {
        throw CheckpointError("optimizer '" + a.name +
                              "' refers to unknown parameter '" + p + "'");
      }
      a.state.m.push_back(take(records, moment_name(a.name, p, "m"), t->numel()).values);
      a.state.v.push_back(take(records, moment_name(a.name, p, "v"), t->numel()).values);
    }
    ck.optimizers.push_back(std::move(a));
  }
  if (!records.empty()) {
    throw CheckpointError("unexpected record '" + records.begin()->first + "'");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace wdda
