#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dcc/errors.hpp"
#include "dcc/model.hpp"

namespace dcc {

namespace {

constexpr char kMagic[] = "DCCM1";
constexpr std::size_t kMagicLen = 5;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Transformer& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  const nlohmann::ordered_json meta = {
      {"format", "dcc-model"},
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"d_model", c.d_model},
      {"d_ff", c.d_ff},
      {"vocab_size", c.vocab_size},
      {"max_positions", c.max_positions},
      {"seed", c.seed},
      {"parameter_count", model.parameter_count()},
  };
  const std::string meta_text = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, kMagicLen);
  put_u32(os, static_cast<std::uint32_t>(meta_text.size()));
  os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  for (const auto* p : model.parameters()) {
    for (float v : p->value.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Transformer load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  if (bytes.size() < kMagicLen) throw IoError("checkpoint truncated: " + path.string());
  if (bytes.compare(0, 4, "DCCM") != 0) {
    throw FormatError("not a model checkpoint (bad magic): " + path.string());
  }
  if (bytes[4] != kMagic[4]) {
    throw FormatError(std::string("unsupported checkpoint version '") + bytes[4] + "' in " +
                      path.string());
  }
  if (bytes.size() < kMagicLen + 4) throw IoError("checkpoint truncated: " + path.string());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t meta_len = get_u32(raw + kMagicLen);
  const std::size_t meta_begin = kMagicLen + 4;
  if (bytes.size() < meta_begin + meta_len) throw IoError("checkpoint truncated: " + path.string());

  ModelConfig cfg;
  try {
    const auto meta = nlohmann::json::parse(bytes.substr(meta_begin, meta_len));
    if (meta.at("format") != "dcc-model") throw FormatError("checkpoint format tag mismatch");
    cfg.n_layers = meta.at("n_layers");
    cfg.n_heads = meta.at("n_heads");
    cfg.d_model = meta.at("d_model");
    cfg.d_ff = meta.at("d_ff");
    cfg.vocab_size = meta.at("vocab_size");
    cfg.max_positions = meta.at("max_positions");
    cfg.seed = meta.at("seed");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint metadata unreadable: " + std::string(e.what()));
  }

  Transformer model(cfg);
  std::size_t pos = meta_begin + meta_len;
  for (auto* p : model.parameters()) {
    const std::size_t need = p->value.size() * 4;
    if (bytes.size() < pos + need) throw IoError("checkpoint truncated: " + path.string());
    for (float& v : p->value.data()) {
      v = std::bit_cast<float>(get_u32(raw + pos));
      pos += 4;
    }
  }
  if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes: " + path.string());
  return model;
}

}  // namespace dcc
