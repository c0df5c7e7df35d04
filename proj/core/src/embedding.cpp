#include "neuronscope/embedding.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "neuronscope/errors.hpp"
#include "neuronscope/rng.hpp"

namespace neuronscope {

static_assert(std::endian::native == std::endian::little,
              "EMB1 reader/writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagIds = 1u;

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get_le(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw CorruptFile("truncated header in " + path.string());
  return v;
}

std::filesystem::path ids_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".ids.json");
}

EmbeddingMatrix read_emb1(std::ifstream& in,
                          const std::filesystem::path& path) {
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported EMB1 version " + std::to_string(version) +
                      " in " + path.string());
  }
  const auto count = get_le<std::uint64_t>(in, path);
  const auto dim = get_le<std::uint32_t>(in, path);
  const auto flags = get_le<std::uint32_t>(in, path);
  if (dim == 0) throw CorruptFile("zero dim in " + path.string());

  EmbeddingMatrix m;
  m.count = static_cast<std::size_t>(count);
  m.dim = dim;
  m.values.resize(m.count * m.dim);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) !=
      m.values.size() * sizeof(float)) {
    throw CorruptFile("payload shorter than count*dim in " + path.string());
  }
  in.peek();
  if (!in.eof()) {
    throw CorruptFile("trailing bytes beyond count*dim in " + path.string());
  }

  if (flags & kFlagIds) {
    const auto sidecar = ids_sidecar_path(path);
    std::ifstream ids_in(sidecar);
    if (!ids_in) {
      throw CorruptFile("ids flag set but sidecar missing: " +
                        sidecar.string());
    }
    nlohmann::json j;
    try {
      ids_in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFile("bad ids sidecar " + sidecar.string() + ": " +
                        e.what());
    }
    if (!j.is_array() || j.size() != m.count) {
      throw CorruptFile("ids sidecar must hold exactly count strings: " +
                        sidecar.string());
    }
    m.item_ids.reserve(m.count);
    for (const auto& s : j) {
      if (!s.is_string()) {
        throw CorruptFile("non-string id in " + sidecar.string());
      }
      m.item_ids.push_back(s.get<std::string>());
    }
  }
  m.validate();
  return m;
}

bool parse_float(const std::string& cell, float& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' ||
                          last[-1] == '\r')) --last;
  if (first == last) return false;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

EmbeddingMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  EmbeddingMatrix m;
  bool ids_present = false;
  bool first_row = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first_row) {
      float probe;
      ids_present = !parse_float(cells.front(), probe);
      if (ids_present && cells.size() < 2) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": no numeric cells");
      }
      m.dim = cells.size() - (ids_present ? 1 : 0);
      first_row = false;
    }
    const std::size_t expected = m.dim + (ids_present ? 1 : 0);
    if (cells.size() != expected) {
      throw CorruptFile(path.string() + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(expected) +
                        " cells, got " + std::to_string(cells.size()));
    }
    std::size_t c = 0;
    if (ids_present) m.item_ids.push_back(cells[c++]);
    for (; c < cells.size(); ++c) {
      float v;
      if (!parse_float(cells[c], v)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": non-numeric cell '" + cells[c] + "'");
      }
      m.values.push_back(v);
    }
    ++m.count;
  }
  if (first_row) {
    throw FormatError(path.string() + ": empty file, cannot infer dim");
  }
  m.validate();
  return m;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (dim == 0) throw ShapeError("embedding dim must be positive");
  if (values.size() != count * dim) {
    throw ShapeError("values length " + std::to_string(values.size()) +
                     " != count*dim = " + std::to_string(count * dim));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidValue("non-finite value at row " + std::to_string(i / dim) +
                         " col " + std::to_string(i % dim));
    }
  }
  if (!item_ids.empty()) {
    if (item_ids.size() != count) {
      throw ShapeError("item_ids length != count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : item_ids) {
      if (!seen.insert(id).second) {
        throw InvalidValue("duplicate item id '" + id + "'");
      }
    }
  }
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
    return read_emb1(in, path);
  }
  in.close();
  try {
    return read_csv(path);
  } catch (const FormatError&) {
    throw FormatError(path.string() +
                      ": not an EMB1 file (bad magic) and not parseable CSV");
  }
}

void write_embeddings(const EmbeddingMatrix& m,
                      const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, static_cast<std::uint64_t>(m.count));
  put_u32(out, static_cast<std::uint32_t>(m.dim));
  put_u32(out, m.has_ids() ? kFlagIds : 0u);
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
  out.close();

  if (m.has_ids()) {
    nlohmann::json j = m.item_ids;
    std::ofstream ids_out(ids_sidecar_path(path), std::ios::trunc);
    if (!ids_out) {
      throw IoError("cannot write ids sidecar for " + path.string());
    }
    ids_out << j.dump() << '\n';
  }
}

PairedDataset make_pairs(EmbeddingMatrix clean, EmbeddingMatrix noisy,
                         std::uint32_t noise_step) {
  if (clean.count != noisy.count || clean.dim != noisy.dim) {
    throw ShapeError("clean " + std::to_string(clean.count) + "x" +
                     std::to_string(clean.dim) + " vs noisy " +
                     std::to_string(noisy.count) + "x" +
                     std::to_string(noisy.dim));
  }
  return PairedDataset{std::move(clean), std::move(noisy), noise_step};
}

EmbeddingMatrix sample_batch(const EmbeddingMatrix& m, std::size_t batch_size,
                             std::uint64_t seed) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (m.count == 0) throw InvalidArgument("cannot sample from empty matrix");
  EmbeddingMatrix batch;
  batch.count = batch_size;
  batch.dim = m.dim;
  batch.values.resize(batch_size * m.dim);
  Rng rng(seed);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto src = static_cast<std::size_t>(rng.uniform_below(m.count));
    std::memcpy(batch.values.data() + i * m.dim, m.values.data() + src * m.dim,
                m.dim * sizeof(float));
  }
  return batch;
}

std::vector<float> column_mean(const EmbeddingMatrix& m) {
  std::vector<double> acc(m.dim, 0.0);
  for (std::size_t i = 0; i < m.count; ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.dim; ++j) acc[j] += r[j];
  }
  std::vector<float> mean(m.dim, 0.0f);
  if (m.count > 0) {
    for (std::size_t j = 0; j < m.dim; ++j) {
      mean[j] = static_cast<float>(acc[j] / static_cast<double>(m.count));
    }
  }
  return mean;
}

}  // namespace neuronscope
