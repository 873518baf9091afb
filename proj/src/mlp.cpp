#include "pul/mlp.hpp"

#include <cmath>
#include <sstream>

#include "pul/io_util.hpp"
#include "pul/rng.hpp"

namespace pul {

MlpModel MlpModel::init(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("mlp: layer dims must be positive");
  MlpModel m;
  m.dims = dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    Mat w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = a * (2.0 * rng.uniform01() - 1.0);
    Vec bias(out);
    for (int r = 0; r < out; ++r) bias[r] = a * (2.0 * rng.uniform01() - 1.0);
    m.w.push_back(std::move(w));
    m.b.push_back(std::move(bias));
  }
  return m;
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w.size(); ++l)
    n += static_cast<std::size_t>(w[l].size()) + static_cast<std::size_t>(b[l].size());
  return n;
}

void MlpModel::validate() const {
  if (dims.size() < 2 || w.size() != dims.size() - 1 || b.size() != w.size())
    throw std::invalid_argument("mlp: inconsistent layer bookkeeping");
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l].rows() != dims[l + 1] || w[l].cols() != dims[l] || b[l].size() != dims[l + 1])
      throw std::invalid_argument("mlp: layer " + std::to_string(l) + " shape mismatch");
    if (!w[l].allFinite() || !b[l].allFinite())
      throw NumericalError("mlp: non-finite parameters in layer " + std::to_string(l));
  }
}

Vec MlpModel::forward(const Vec& x) const {
  if (x.size() != dims.front()) throw std::invalid_argument("mlp: input dim mismatch");
  Vec a = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Vec z = w[l] * a + b[l];
    a = (l + 1 < w.size()) ? z.cwiseMax(0.0) : z;
  }
  return a;
}

Mat MlpModel::forward_batch(const Mat& x) const {
  if (x.cols() != dims.front()) throw std::invalid_argument("mlp: input dim mismatch");
  Mat a = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Mat z = (a * w[l].transpose()).rowwise() + b[l].transpose();
    a = (l + 1 < w.size()) ? z.cwiseMax(0.0).eval() : z;
  }
  return a;
}

std::vector<int> arch_dims(const std::string& arch, int input_dim, int num_classes, int hidden) {
  if (input_dim < 1 || num_classes < 2 || hidden < 1)
    throw std::invalid_argument("arch: bad dims");
  if (arch == "linear") return {input_dim, num_classes};
  if (arch == "mlp1") return {input_dim, hidden, num_classes};
  if (arch == "mlp2") return {input_dim, hidden, hidden, num_classes};
  throw std::invalid_argument("unknown architecture '" + arch + "' (linear, mlp1, mlp2)");
}

std::string arch_kind(const std::string& arch) {
  arch_dims(arch, 2, 2, 1);  // validates the name
  return arch == "linear" ? "linear" : "mlp";
}

void save_model(const MlpModel& m, const std::string& path) {
  m.validate();
  std::ostringstream out;
  out << "mlpckpt v1\n";
  out << "dims";
  for (int d : m.dims) out << ' ' << d;
  out << '\n';
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    out << "layer " << l << '\n';
    for (Eigen::Index r = 0; r < m.w[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.w[l].cols(); ++c)
        out << (c ? " " : "") << fmt_g17(m.w[l](r, c));
      out << '\n';
    }
    for (Eigen::Index r = 0; r < m.b[l].size(); ++r)
      out << (r ? " " : "") << fmt_g17(m.b[l][r]);
    out << '\n';
  }
  atomic_write(path, out.str());
}

MlpModel load_model(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string tok, ver;
  if (!(in >> tok >> ver) || tok != "mlpckpt" || ver != "v1")
    throw std::invalid_argument("model file: bad header in " + path);
  if (!(in >> tok) || tok != "dims")
    throw std::invalid_argument("model file: missing dims in " + path);
  MlpModel m;
  {
    std::string rest;
    std::getline(in, rest);
    for (const auto& piece : split(trim(rest), ' '))
      if (!piece.empty()) m.dims.push_back(parse_int(piece, "dims"));
  }
  if (m.dims.size() < 2) throw std::invalid_argument("model file: fewer than two dims");
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    std::size_t li = 0;
    if (!(in >> tok >> li) || tok != "layer" || li != l)
      throw std::invalid_argument("model file: expected layer " + std::to_string(l));
    Mat w(m.dims[l + 1], m.dims[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        if (!(in >> w(r, c))) throw std::invalid_argument("model file: truncated weights");
    Vec b(m.dims[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r)
      if (!(in >> b[r])) throw std::invalid_argument("model file: truncated biases");
    m.w.push_back(std::move(w));
    m.b.push_back(std::move(b));
  }
  m.validate();
  return m;
}

}  // namespace pul
