// Copyright 2026 The dprdm Authors
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

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprdm/index.hpp"

// Embedding file I/O.
//
// Binary format (little-endian):
//   magic   "DPRV" (4 bytes)
//   version u32    (currently 1)
//   dim     u32
//   count   u64
//   records count x { id: u64, values: dim x f32 }
//
// The JSONL form is one object per line: {"id": <uint>, "vector": [..]}.
// Values are stored as f32 in the binary format; readers widen to double.

namespace dprdm {

inline constexpr char kEmbeddingMagic[4] = {'D', 'P', 'R', 'V'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  // Host is little-endian on every supported target.
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    throw std::runtime_error(path + ": truncated file while reading " +
                             std::string(what));
  }
  return value;
}

}  // namespace detail

inline void write_embedding_file(const std::string& path,
                                 const std::vector<EmbeddingRecord>& records,
                                 std::size_t dim) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kEmbeddingMagic, 4);
  detail::write_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  detail::write_le<std::uint64_t>(out, records.size());
  for (const auto& rec : records) {
    if (rec.vector.size() != dim) {
      throw std::invalid_argument(path + ": record " + std::to_string(rec.id) +
                                  " has dimension " +
                                  std::to_string(rec.vector.size()) +
                                  ", file header says " + std::to_string(dim));
    }
    detail::write_le<std::uint64_t>(out, rec.id);
    for (double v : rec.vector) {
      detail::write_le<float>(out, static_cast<float>(v));
    }
  }
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline std::vector<EmbeddingRecord> read_binary_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic bytes (not an embedding file)");
  }
  const auto version = detail::read_le<std::uint32_t>(in, path, "version");
  if (version != kEmbeddingFormatVersion) {
    throw std::runtime_error(path + ": unsupported format version " +
                             std::to_string(version));
  }
  const auto dim = detail::read_le<std::uint32_t>(in, path, "dim");
  const auto count = detail::read_le<std::uint64_t>(in, path, "count");
  if (dim == 0) throw std::runtime_error(path + ": header dim is zero");

  std::vector<EmbeddingRecord> records;
  records.reserve(count);
  std::vector<float> buffer(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    rec.id = detail::read_le<std::uint64_t>(in, path, "record id");
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(sizeof(float) * dim));
    if (!in) {
      throw std::runtime_error(path + ": truncated record " +
                               std::to_string(rec.id));
    }
    rec.vector.assign(buffer.begin(), buffer.end());
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<EmbeddingRecord> read_jsonl_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::vector<EmbeddingRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": invalid JSON: " + e.what());
    }
    if (!obj.contains("id") || !obj.contains("vector")) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": record needs `id` and `vector` fields");
    }
    EmbeddingRecord rec;
    rec.id = obj.at("id").get<std::uint64_t>();
    rec.vector = obj.at("vector").get<std::vector<double>>();
    records.push_back(std::move(rec));
  }
  return records;
}

// Reads either format, sniffing the binary magic.
inline std::vector<EmbeddingRecord> read_embedding_records(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error(path + ": cannot open");
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, kEmbeddingMagic, 4) == 0) {
    return read_binary_records(path);
  }
  return read_jsonl_records(path);
}

inline void save_index(const RetrievalIndex& index, const std::string& path) {
  std::vector<EmbeddingRecord> records;
  records.reserve(index.count());
  for (std::size_t i = 0; i < index.count(); ++i) {
    auto v = index.vector_at(i);
    records.push_back({index.id_at(i), std::vector<double>(v.begin(), v.end())});
  }
  write_embedding_file(path, records, index.dim());
}

inline RetrievalIndex load_index(const std::string& path) {
  return build_index(read_embedding_records(path));
}

}  // namespace dprdm
