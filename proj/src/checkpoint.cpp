// Copyright 2026 The kgjoint Authors.
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

#include "kgjoint/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace kgjoint {

namespace {

constexpr char kMagic[8] = {'K', 'G', 'J', 'C', 'K', 'P', 'T', '\0'};
// Guards against absurd allocations from a corrupt file.
constexpr uint64_t kMaxElements = uint64_t{1} << 34;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void text(const std::string& s) {
    pod<uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    pod<uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string text() {
    const auto n = pod<uint64_t>();
    if (n > kMaxElements) fail("string length out of range");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<uint64_t>();
    if (n > kMaxElements) fail("array length out of range");
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const { throw Error(path_ + ": " + what); }

 private:
  void check() const {
    if (!in_) fail("truncated checkpoint");
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& config, const ModelDims& dims, int64_t step,
                     const ParameterStore& params, const EntityMemory* memory) {
  // Write to a sibling file and rename so a crash never leaves a torn
  // checkpoint behind.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod<uint32_t>(kCheckpointVersion);
    w.text(render_config(config));
    w.pod<uint64_t>(dims.vocab_size);
    w.pod<uint64_t>(dims.categories);
    w.pod<uint64_t>(dims.relations);
    w.pod<int64_t>(step);
    w.pod<uint64_t>(params.size());
    for (const auto& [name, p] : params.all()) {
      w.text(name);
      w.pod<uint32_t>(p.group == ParamGroup::kLanguage ? 0 : 1);
      w.pod<uint64_t>(p.tensor.shape().size());
      for (size_t extent : p.tensor.shape()) w.pod<uint64_t>(extent);
      w.doubles(std::vector<double>(p.tensor.values().begin(), p.tensor.values().end()));
      w.doubles(p.first_moment);
      w.doubles(p.second_moment);
      w.pod<int64_t>(p.step);
    }
    w.pod<uint8_t>(memory ? 1 : 0);
    if (memory) {
      const MemorySchedule& s = memory->schedule();
      w.pod<uint64_t>(memory->rows());
      w.pod<uint64_t>(memory->width());
      w.doubles(std::vector<double>(memory->values().begin(), memory->values().end()));
      w.pod<uint64_t>(memory->refresh_count());
      w.pod<uint64_t>(memory->steps_since_refresh());
      w.pod<uint64_t>(s.initial_interval);
      w.pod<uint64_t>(s.growth);
      w.pod<uint64_t>(s.growth_period);
      w.pod<uint64_t>(s.max_interval);
      w.pod<double>(s.momentum);
      w.pod<uint8_t>(memory->frozen() ? 1 : 0);
    }
    out.flush();
    if (!out) throw Error("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Reader r(in, path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not a checkpoint file");
  const auto version = r.pod<uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("checkpoint version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  {
    std::istringstream text(r.text());
    std::string line;
    while (std::getline(text, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) r.fail("malformed config record");
      ck.config.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  ck.dims.vocab_size = r.pod<uint64_t>();
  ck.dims.categories = r.pod<uint64_t>();
  ck.dims.relations = r.pod<uint64_t>();
  ck.step = r.pod<int64_t>();
  const auto count = r.pod<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = r.text();
    const auto group = r.pod<uint32_t>();
    if (group > 1) r.fail("bad parameter group for " + name);
    const auto rank = r.pod<uint64_t>();
    if (rank == 0 || rank > 8) r.fail("bad rank for " + name);
    Shape shape;
    for (uint64_t k = 0; k < rank; ++k) shape.push_back(r.pod<uint64_t>());
    std::vector<double> values = r.doubles();
    if (values.size() != shape_size(shape)) r.fail("value count does not match the shape of " + name);
    std::vector<double> m = r.doubles();
    std::vector<double> v = r.doubles();
    if (m.size() != values.size() || v.size() != values.size()) r.fail("optimizer slots mismatch for " + name);
    const auto step = r.pod<int64_t>();
    if (ck.params.contains(name)) r.fail("duplicate parameter " + name);
    ck.params.add(name, shape, std::move(values), group == 0 ? ParamGroup::kLanguage : ParamGroup::kKnowledge);
    Parameter& p = ck.params.parameter(name);
    p.first_moment = std::move(m);
    p.second_moment = std::move(v);
    p.step = step;
  }
  if (r.pod<uint8_t>() != 0) {
    const auto rows = r.pod<uint64_t>();
    const auto width = r.pod<uint64_t>();
    std::vector<double> values = r.doubles();
    const auto refreshes = r.pod<uint64_t>();
    const auto since = r.pod<uint64_t>();
    MemorySchedule s;
    s.initial_interval = r.pod<uint64_t>();
    s.growth = r.pod<uint64_t>();
    s.growth_period = r.pod<uint64_t>();
    s.max_interval = r.pod<uint64_t>();
    s.momentum = r.pod<double>();
    const bool frozen = r.pod<uint8_t>() != 0;
    EntityMemory memory(rows, width, std::move(values), s);
    memory.restore_state(refreshes, since);
    if (frozen) memory.freeze();
    ck.memory = std::move(memory);
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after checkpoint");
  return ck;
}

}  // namespace kgjoint
