#pragma once

/** File formats.
 *
 * Instance directory:
 *   meta.json   {"n","d","sigma","p","seed","has_truth"}
 *   blocks.f64  observed blocks A_ij for i < j in ascending (i, j) order,
 *               each row-major, little-endian IEEE-754 doubles
 *   mask.csv    one "i,j" line (1-based, i < j) per observed pair, same order
 *   truth.f64   optional, n blocks row-major
 *
 * Edge list (text):
 *   # n=<n> d=<d>
 *   i j m11 m12 ... mdd      (1-based, row-major block, whitespace separated)
 * Further lines starting with '#' are comments.
 *
 * Pose file (poses.txt and companion truth files): n lines of d*d row-major
 * entries.
 */

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsrgs/datagen.hpp"

namespace nsrgs {

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xFFu) << (8 * (7 - k));
    return r;
  }
}

inline void write_f64(std::ostream& out, double x) {
  const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(x));
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.write(buf, 8);
}

inline double read_f64(std::istream& in) {
  char buf[8];
  if (!in.read(buf, 8)) throw ParseError("unexpected end of binary block file");
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  return std::bit_cast<double>(to_little_endian(bits));
}

template <typename Derived>
void write_block_row_major(std::ostream& out, const Eigen::MatrixBase<Derived>& b) {
  for (Index r = 0; r < b.rows(); ++r)
    for (Index c = 0; c < b.cols(); ++c) write_f64(out, b(r, c));
}

inline Matrix read_block_row_major(std::istream& in, Index d) {
  Matrix b(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) b(r, c) = read_f64(in);
  return b;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_index(const std::string& tok, std::size_t line) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad index '" + tok + "'", line);
  }
  if (pos != tok.size() || v < 1) throw ParseError("bad index '" + tok + "'", line);
  return static_cast<std::size_t>(v);
}

inline double parse_real(const std::string& tok, std::size_t line) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + tok + "'", line);
  }
  if (pos != tok.size() || !std::isfinite(v)) throw ParseError("bad number '" + tok + "'", line);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pose files

inline void save_poses(const BlockStack& x, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << std::setprecision(17);
  for (Index i = 0; i < x.n(); ++i) {
    const auto b = x.block(i);
    for (Index r = 0; r < x.d(); ++r)
      for (Index c = 0; c < x.d(); ++c) out << (r || c ? " " : "") << b(r, c);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a pose file; `d` is inferred from the first line when 0.
inline BlockStack load_poses(const std::filesystem::path& path, Index d = 0) {
  auto in = detail::open_in(path);
  std::vector<Matrix> blocks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    for (std::string tok; ls >> tok;) vals.push_back(detail::parse_real(tok, lineno));
    if (d == 0) {
      const auto root = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(vals.size()))));
      if (root < 1 || root * root != static_cast<Index>(vals.size()))
        throw ParseError("pose line does not hold a square block", lineno);
      d = root;
    }
    if (static_cast<Index>(vals.size()) != d * d)
      throw ParseError("expected " + std::to_string(d * d) + " entries", lineno);
    Matrix b(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) b(r, c) = vals[static_cast<std::size_t>(r * d + c)];
    blocks.push_back(std::move(b));
  }
  if (blocks.size() < 2) throw ParseError("pose file needs at least two poses");
  return BlockStack::from_blocks(blocks);
}

// ---------------------------------------------------------------------------
// Edge lists

inline constexpr double kDuplicateEdgeTol = 1e-9;

inline void save_edge_list(const BlockObservation& obs, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "# n=" << obs.n() << " d=" << obs.d() << '\n' << std::setprecision(17);
  for (Index i = 0; i < obs.n(); ++i)
    for (Index j = i + 1; j < obs.n(); ++j) {
      if (!obs.observed(i, j)) continue;
      out << i + 1 << ' ' << j + 1;
      const auto b = obs.block(i, j);
      for (Index r = 0; r < obs.d(); ++r)
        for (Index c = 0; c < obs.d(); ++c) out << ' ' << b(r, c);
      out << '\n';
    }
  if (!out) throw IoError("write failed: " + path.string());
}

inline SyncInstance load_edge_list(const std::filesystem::path& path,
                                   const std::optional<std::filesystem::path>& truth_path = {}) {
  auto in = detail::open_in(path);
  std::string line;
  std::size_t lineno = 0;
  Index n = 0;
  Index d = 0;
  bool have_header = false;
  std::optional<BlockObservation> obs;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (have_header) continue;
      std::istringstream hs(t.substr(1));
      bool got_n = false, got_d = false;
      for (std::string tok; hs >> tok;) {
        if (tok.rfind("n=", 0) == 0) {
          n = static_cast<Index>(detail::parse_index(tok.substr(2), lineno));
          got_n = true;
        } else if (tok.rfind("d=", 0) == 0) {
          d = static_cast<Index>(detail::parse_index(tok.substr(2), lineno));
          got_d = true;
        }
      }
      if (!got_n || !got_d) throw ParseError("expected header '# n=<n> d=<d>'", lineno);
      if (n < 2) throw ParseError("header needs n >= 2", lineno);
      have_header = true;
      obs.emplace(n, d);
      continue;
    }
    if (!have_header) throw ParseError("edge before '# n=<n> d=<d>' header", lineno);

    std::istringstream ls(t);
    std::vector<std::string> toks;
    for (std::string tok; ls >> tok;) toks.push_back(tok);
    if (static_cast<Index>(toks.size()) != 2 + d * d)
      throw ParseError("expected 2 indices and " + std::to_string(d * d) + " block entries, got " +
                           std::to_string(toks.size()) + " fields",
                       lineno);
    const auto i = detail::parse_index(toks[0], lineno);
    const auto j = detail::parse_index(toks[1], lineno);
    if (i > static_cast<std::size_t>(n) || j > static_cast<std::size_t>(n))
      throw ParseError("node index out of range 1.." + std::to_string(n), lineno);
    if (i == j) throw ParseError("self-loop edge", lineno);
    Matrix m(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c)
        m(r, c) = detail::parse_real(toks[static_cast<std::size_t>(2 + r * d + c)], lineno);

    const auto ii = static_cast<Index>(i - 1);
    const auto jj = static_cast<Index>(j - 1);
    if (obs->observed(ii, jj)) {
      const double diff = (Matrix(obs->block(ii, jj)) - m).cwiseAbs().maxCoeff();
      if (diff > kDuplicateEdgeTol)
        throw DuplicateEdge("pair (" + std::to_string(i) + "," + std::to_string(j) +
                            ") listed again with an inconsistent block (line " +
                            std::to_string(lineno) + ")");
      continue;
    }
    obs->set_block(ii, jj, m);
  }
  if (!have_header) throw ParseError("missing '# n=<n> d=<d>' header", lineno ? lineno : 1);

  SyncInstance inst;
  inst.n = n;
  inst.d = d;
  inst.sigma = 0.0;
  inst.p = obs->observed_fraction();
  inst.observation = std::move(*obs);
  if (truth_path) {
    BlockStack z = load_poses(*truth_path, d);
    if (z.n() != n) throw ParseError("truth file has " + std::to_string(z.n()) + " poses, expected " + std::to_string(n));
    inst.ground_truth = std::move(z);
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Instance directories

inline void save_instance(const SyncInstance& inst, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json meta;
  meta["n"] = inst.n;
  meta["d"] = inst.d;
  meta["sigma"] = inst.sigma;
  meta["p"] = inst.p;
  meta["seed"] = inst.seed;
  meta["has_truth"] = inst.ground_truth.has_value();
  {
    auto out = detail::open_out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    auto blocks = detail::open_out(dir / "blocks.f64", true);
    auto mask = detail::open_out(dir / "mask.csv");
    const auto& obs = inst.observation;
    for (Index i = 0; i < obs.n(); ++i)
      for (Index j = i + 1; j < obs.n(); ++j) {
        if (!obs.observed(i, j)) continue;
        detail::write_block_row_major(blocks, obs.block(i, j));
        mask << i + 1 << ',' << j + 1 << '\n';
      }
    if (!blocks || !mask) throw IoError("write failed in " + dir.string());
  }
  const auto truth_file = dir / "truth.f64";
  if (inst.ground_truth) {
    auto out = detail::open_out(truth_file, true);
    for (Index i = 0; i < inst.ground_truth->n(); ++i)
      detail::write_block_row_major(out, inst.ground_truth->block(i));
    if (!out) throw IoError("write failed: " + truth_file.string());
  } else {
    std::filesystem::remove(truth_file, ec);
  }
}

inline SyncInstance load_instance(const std::filesystem::path& dir) {
  nlohmann::json meta;
  {
    auto in = detail::open_in(dir / "meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("meta.json: ") + e.what());
    }
  }
  SyncInstance inst;
  bool has_truth = false;
  try {
    inst.n = meta.at("n").get<Index>();
    inst.d = meta.at("d").get<Index>();
    inst.sigma = meta.at("sigma").get<double>();
    inst.p = meta.at("p").get<double>();
    inst.seed = meta.at("seed").get<std::uint64_t>();
    has_truth = meta.at("has_truth").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("meta.json: ") + e.what());
  }
  if (inst.n < 2 || inst.d < 1) throw ParseError("meta.json: need n >= 2 and d >= 1");

  BlockObservation obs(inst.n, inst.d);
  auto mask = detail::open_in(dir / "mask.csv");
  auto blocks = detail::open_in(dir / "blocks.f64", true);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(mask, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos) throw ParseError("mask.csv: expected 'i,j'", lineno);
    const auto i = detail::parse_index(detail::trim(t.substr(0, comma)), lineno);
    const auto j = detail::parse_index(detail::trim(t.substr(comma + 1)), lineno);
    if (i > static_cast<std::size_t>(inst.n) || j > static_cast<std::size_t>(inst.n) || i == j)
      throw ParseError("mask.csv: bad pair", lineno);
    obs.set_block(static_cast<Index>(i - 1), static_cast<Index>(j - 1),
                  detail::read_block_row_major(blocks, inst.d));
  }
  if (blocks.peek() != std::char_traits<char>::eof())
    throw ParseError("blocks.f64 holds more data than mask.csv lists");
  obs.set_sampling_rate(inst.p);
  inst.observation = std::move(obs);

  if (has_truth) {
    auto in = detail::open_in(dir / "truth.f64", true);
    BlockStack z(inst.n, inst.d);
    for (Index i = 0; i < inst.n; ++i) z.block(i) = detail::read_block_row_major(in, inst.d);
    if (max_block_orthogonality_defect(z) <= kOrthTol) z.mark_orthogonal();
    inst.ground_truth = std::move(z);
  }
  return inst;
}

}  // namespace nsrgs
