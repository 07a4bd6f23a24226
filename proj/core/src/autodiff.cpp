#include "resbridge/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace resbridge {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Tensor value) {
  return push({Op::kLeaf, {}, 0.0, {}, std::move(value), {}});
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Tensor v = resbridge::add(value(a), value(b));
  return push({Op::kAdd, {a, b}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::add_rowvec(NodeId mat, NodeId row) {
  const Tensor& m = value(mat);
  const Tensor& r = value(row);
  if (m.shape().size() != 2 || r.size() != m.cols()) {
    throw std::invalid_argument("add_rowvec shape mismatch");
  }
  Tensor v = m;
  for (int64_t i = 0; i < m.rows(); ++i) {
    for (int64_t j = 0; j < m.cols(); ++j) v.at(i, j) += r[j];
  }
  return push({Op::kAddRowVec, {mat, row}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  Tensor v = resbridge::sub(value(a), value(b));
  return push({Op::kSub, {a, b}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::scale(NodeId a, double s) {
  Tensor v = resbridge::scale(value(a), s);
  return push({Op::kScale, {a}, s, {}, std::move(v), {}});
}

Tape::NodeId Tape::scale_rows(NodeId a, std::vector<double> weights) {
  const Tensor& m = value(a);
  if (m.shape().size() != 2 || static_cast<int64_t>(weights.size()) != m.rows()) {
    throw std::invalid_argument("scale_rows shape mismatch");
  }
  Tensor v = m;
  for (int64_t i = 0; i < m.rows(); ++i) {
    for (int64_t j = 0; j < m.cols(); ++j) v.at(i, j) *= weights[static_cast<size_t>(i)];
  }
  return push({Op::kScaleRows, {a}, 0.0, std::move(weights), std::move(v), {}});
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  Tensor v = resbridge::matmul(value(a), value(b));
  return push({Op::kMatmul, {a, b}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::tanh(NodeId a) {
  Tensor v = value(a);
  for (int64_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
  return push({Op::kTanh, {a}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::gelu(NodeId a) {
  Tensor v = value(a);
  for (int64_t i = 0; i < v.size(); ++i) {
    double x = v[i];
    v[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return push({Op::kGelu, {a}, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::mean_sq(NodeId a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
  double m = x.empty() ? 0.0 : s / static_cast<double>(x.size());
  return push({Op::kMeanSq, {a}, 0.0, {}, Tensor::scalar(m), {}});
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int64_t rows = value(parts[0]).rows();
  int64_t total = 0;
  for (NodeId p : parts) {
    if (value(p).shape().size() != 2 || value(p).rows() != rows) {
      throw std::invalid_argument("concat_cols shape mismatch");
    }
    total += value(p).cols();
  }
  Tensor v({rows, total});
  int64_t off = 0;
  for (NodeId p : parts) {
    const Tensor& m = value(p);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < m.cols(); ++j) v.at(i, off + j) = m.at(i, j);
    }
    off += m.cols();
  }
  return push({Op::kConcatCols, parts, 0.0, {}, std::move(v), {}});
}

Tape::NodeId Tape::detach(NodeId a) {
  return push({Op::kDetach, {a}, 0.0, {}, value(a), {}});
}

void Tape::backward(NodeId loss) {
  Node& top = nodes_[static_cast<size_t>(loss)];
  if (top.value.size() != 1) throw std::invalid_argument("loss must be scalar");

  for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
  top.grad[0] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kDetach:
        break;
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s) {
          Tensor& ig = nodes_[static_cast<size_t>(n.in[s])].grad;
          for (int64_t i = 0; i < g.size(); ++i) ig[i] += g[i];
        }
        break;
      }
      case Op::kAddRowVec: {
        Tensor& mg = nodes_[static_cast<size_t>(n.in[0])].grad;
        Tensor& rg = nodes_[static_cast<size_t>(n.in[1])].grad;
        const int64_t rows = n.value.rows(), cols = n.value.cols();
        for (int64_t i = 0; i < rows; ++i) {
          for (int64_t j = 0; j < cols; ++j) {
            mg.at(i, j) += g.at(i, j);
            rg[j] += g.at(i, j);
          }
        }
        break;
      }
      case Op::kSub: {
        Tensor& ag = nodes_[static_cast<size_t>(n.in[0])].grad;
        Tensor& bg = nodes_[static_cast<size_t>(n.in[1])].grad;
        for (int64_t i = 0; i < g.size(); ++i) {
          ag[i] += g[i];
          bg[i] -= g[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ig = nodes_[static_cast<size_t>(n.in[0])].grad;
        for (int64_t i = 0; i < g.size(); ++i) ig[i] += n.scalar * g[i];
        break;
      }
      case Op::kScaleRows: {
        Tensor& ig = nodes_[static_cast<size_t>(n.in[0])].grad;
        const int64_t rows = n.value.rows(), cols = n.value.cols();
        for (int64_t i = 0; i < rows; ++i) {
          const double w = n.row_weights[static_cast<size_t>(i)];
          for (int64_t j = 0; j < cols; ++j) ig.at(i, j) += w * g.at(i, j);
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = nodes_[static_cast<size_t>(n.in[0])].value;
        const Tensor& b = nodes_[static_cast<size_t>(n.in[1])].value;
        Tensor& ag = nodes_[static_cast<size_t>(n.in[0])].grad;
        Tensor& bg = nodes_[static_cast<size_t>(n.in[1])].grad;
        const int64_t m = a.rows(), k = a.cols(), p = b.cols();
        // dA += g * B^T
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < p; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (int64_t kk = 0; kk < k; ++kk) ag.at(i, kk) += gv * b.at(kk, j);
          }
        }
        // dB += A^T * g
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t kk = 0; kk < k; ++kk) {
            const double av = a.at(i, kk);
            if (av == 0.0) continue;
            for (int64_t j = 0; j < p; ++j) bg.at(kk, j) += av * g.at(i, j);
          }
        }
        break;
      }
      case Op::kTanh: {
        Tensor& ig = nodes_[static_cast<size_t>(n.in[0])].grad;
        for (int64_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          ig[i] += (1.0 - y * y) * g[i];
        }
        break;
      }
      case Op::kGelu: {
        const Tensor& x = nodes_[static_cast<size_t>(n.in[0])].value;
        Tensor& ig = nodes_[static_cast<size_t>(n.in[0])].grad;
        for (int64_t i = 0; i < g.size(); ++i) {
          const double xi = x[i];
          const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
          ig[i] += (cdf + xi * pdf) * g[i];
        }
        break;
      }
      case Op::kMeanSq: {
        const Tensor& x = nodes_[static_cast<size_t>(n.in[0])].value;
        Tensor& ig = nodes_[static_cast<size_t>(n.in[0])].grad;
        if (!x.empty()) {
          const double c = 2.0 * g[0] / static_cast<double>(x.size());
          for (int64_t i = 0; i < x.size(); ++i) ig[i] += c * x[i];
        }
        break;
      }
      case Op::kConcatCols: {
        const int64_t rows = n.value.rows();
        int64_t off = 0;
        for (NodeId p : n.in) {
          Tensor& ig = nodes_[static_cast<size_t>(p)].grad;
          const int64_t cols = nodes_[static_cast<size_t>(p)].value.cols();
          for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < cols; ++j) ig.at(i, j) += g.at(i, off + j);
          }
          off += cols;
        }
        break;
      }
    }
  }
}

}  // namespace resbridge
