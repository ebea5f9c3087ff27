#include "relgt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace relgt {

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(" << r << "x" << c << ")";
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  RELGT_CHECK(a.c == b.r, "matmul shape mismatch " + a.shape_str() + " x " + b.shape_str());
  Tensor out(a.r, b.c);
  for (int64_t i = 0; i < a.r; ++i) {
    const double* arow = a.data.data() + i * a.c;
    double* orow = out.data.data() + i * b.c;
    for (int64_t k = 0; k < a.c; ++k) {
      double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + k * b.c;
      for (int64_t j = 0; j < b.c; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Tensor init) {
  RELGT_CHECK(index_of(name) < 0, "duplicate parameter '" + name + "'");
  Entry e;
  e.name = name;
  e.grad = Tensor::zeros(init.r, init.c);
  e.adam_m = Tensor::zeros(init.r, init.c);
  e.adam_v = Tensor::zeros(init.r, init.c);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& e : entries_) {
    for (size_t i = 0; i < e.value.data.size(); ++i) {
      double gv = e.grad.data[i];
      e.adam_m.data[i] = beta1 * e.adam_m.data[i] + (1.0 - beta1) * gv;
      e.adam_v.data[i] = beta2 * e.adam_v.data[i] + (1.0 - beta2) * gv * gv;
      double mhat = e.adam_m.data[i] / bc1;
      double vhat = e.adam_v.data[i] / bc2;
      e.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {
constexpr char kCkptMagic[4] = {'R', 'G', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCkptMagic, 4);
  uint32_t ver = kCkptVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  uint32_t n = static_cast<uint32_t>(entries_.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& e : entries_) {
    uint32_t len = static_cast<uint32_t>(e.name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(e.name.data(), len);
    out.write(reinterpret_cast<const char*>(&e.value.r), 8);
    out.write(reinterpret_cast<const char*>(&e.value.c), 8);
    out.write(reinterpret_cast<const char*>(e.value.data.data()),
              static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ParseError(path + ": not an RGT1 checkpoint");
  uint32_t ver = 0, n = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  if (ver != kCkptVersion) throw ParseError(path + ": unsupported checkpoint version");
  if (n != entries_.size()) throw ParseError(path + ": parameter count mismatch");
  for (auto& e : entries_) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    int64_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), 8);
    in.read(reinterpret_cast<char*>(&c), 8);
    if (!in || name != e.name || r != e.value.r || c != e.value.c)
      throw ParseError(path + ": checkpoint does not match model (param '" + e.name + "')");
    in.read(reinterpret_cast<char*>(e.value.data.data()),
            static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
  }
  if (!in) throw IoError("truncated checkpoint " + path);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::make_leaf(Tensor v, bool requires_grad, int slot) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  n.param_slot = slot;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::make_node(Tensor v, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  n.backprop = requires_grad ? std::move(backprop) : nullptr;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::matmul(Var a, Var b) {
  Tensor out = matmul_value(val(a), val(b));
  Var id = make_node(std::move(out), rg(a) || rg(b), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, b, id](Tape& t) {
      const Tensor& go = t.g(id);
      const Tensor& av = t.val(a);
      const Tensor& bv = t.val(b);
      if (t.rg(a)) {  // dA += dC * B^T
        Tensor& ga = t.g(a);
        for (int64_t i = 0; i < av.r; ++i)
          for (int64_t k = 0; k < av.c; ++k) {
            double s = 0.0;
            for (int64_t j = 0; j < bv.c; ++j) s += go.at(i, j) * bv.at(k, j);
            ga.at(i, k) += s;
          }
      }
      if (t.rg(b)) {  // dB += A^T * dC
        Tensor& gb = t.g(b);
        for (int64_t i = 0; i < av.r; ++i)
          for (int64_t k = 0; k < av.c; ++k) {
            double s = av.at(i, k);
            if (s == 0.0) continue;
            for (int64_t j = 0; j < bv.c; ++j) gb.at(k, j) += s * go.at(i, j);
          }
      }
    };
  }
  return id;
}

Tape::Var Tape::add(Var a, Var b) {
  RELGT_CHECK(val(a).same_shape(val(b)),
              "add shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
  Tensor out = val(a);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += val(b).data[i];
  Var id = make_node(std::move(out), rg(a) || rg(b), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, b, id](Tape& t) {
      const Tensor& go = t.g(id);
      if (t.rg(a))
        for (size_t i = 0; i < go.data.size(); ++i) t.g(a).data[i] += go.data[i];
      if (t.rg(b))
        for (size_t i = 0; i < go.data.size(); ++i) t.g(b).data[i] += go.data[i];
    };
  }
  return id;
}

Tape::Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Tape::Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& av = val(a);
  const Tensor& bv = val(bias);
  RELGT_CHECK(bv.r == 1 && bv.c == av.c,
              "add_rowvec shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (int64_t i = 0; i < av.r; ++i)
    for (int64_t j = 0; j < av.c; ++j) out.at(i, j) += bv.at(0, j);
  Var id = make_node(std::move(out), rg(a) || rg(bias), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, bias, id](Tape& t) {
      const Tensor& go = t.g(id);
      if (t.rg(a))
        for (size_t i = 0; i < go.data.size(); ++i) t.g(a).data[i] += go.data[i];
      if (t.rg(bias)) {
        Tensor& gb = t.g(bias);
        for (int64_t i = 0; i < go.r; ++i)
          for (int64_t j = 0; j < go.c; ++j) gb.at(0, j) += go.at(i, j);
      }
    };
  }
  return id;
}

Tape::Var Tape::mul(Var a, Var b) {
  RELGT_CHECK(val(a).same_shape(val(b)),
              "mul shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
  Tensor out = val(a);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= val(b).data[i];
  Var id = make_node(std::move(out), rg(a) || rg(b), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, b, id](Tape& t) {
      const Tensor& go = t.g(id);
      if (t.rg(a))
        for (size_t i = 0; i < go.data.size(); ++i)
          t.g(a).data[i] += go.data[i] * t.val(b).data[i];
      if (t.rg(b))
        for (size_t i = 0; i < go.data.size(); ++i)
          t.g(b).data[i] += go.data[i] * t.val(a).data[i];
    };
  }
  return id;
}

Tape::Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (double& v : out.data) v *= s;
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, s, id](Tape& t) {
      const Tensor& go = t.g(id);
      for (size_t i = 0; i < go.data.size(); ++i) t.g(a).data[i] += s * go.data[i];
    };
  }
  return id;
}

Tape::Var Tape::scale_by(Var a, Var s) {
  RELGT_CHECK(val(s).numel() == 1, "scale_by expects a 1x1 scalar");
  double sv = val(s).data[0];
  Tensor out = val(a);
  for (double& v : out.data) v *= sv;
  Var id = make_node(std::move(out), rg(a) || rg(s), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, s, sv, id](Tape& t) {
      const Tensor& go = t.g(id);
      if (t.rg(a))
        for (size_t i = 0; i < go.data.size(); ++i) t.g(a).data[i] += sv * go.data[i];
      if (t.rg(s)) {
        double acc = 0.0;
        for (size_t i = 0; i < go.data.size(); ++i) acc += go.data[i] * t.val(a).data[i];
        t.g(s).data[0] += acc;
      }
    };
  }
  return id;
}

Tape::Var Tape::concat_cols(std::span<const Var> xs) {
  RELGT_CHECK(!xs.empty(), "concat of nothing");
  int64_t rows = val(xs[0]).r;
  int64_t cols = 0;
  bool req = false;
  for (Var x : xs) {
    RELGT_CHECK(val(x).r == rows, "concat_cols row mismatch");
    cols += val(x).c;
    req = req || rg(x);
  }
  Tensor out(rows, cols);
  int64_t off = 0;
  for (Var x : xs) {
    const Tensor& xv = val(x);
    for (int64_t i = 0; i < rows; ++i)
      std::copy(xv.data.begin() + i * xv.c, xv.data.begin() + (i + 1) * xv.c,
                out.data.begin() + i * cols + off);
    off += xv.c;
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  Var id = make_node(std::move(out), req, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [inputs, rows, cols, id](Tape& t) {
      const Tensor& go = t.g(id);
      int64_t off2 = 0;
      for (Var x : inputs) {
        int64_t w = t.val(x).c;
        if (t.rg(x)) {
          Tensor& gx = t.g(x);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j) gx.at(i, j) += go.at(i, off2 + j);
        }
        off2 += w;
      }
      (void)cols;
    };
  }
  return id;
}

Tape::Var Tape::slice_rows(Var a, int64_t begin, int64_t end) {
  const Tensor& av = val(a);
  RELGT_CHECK(0 <= begin && begin < end && end <= av.r, "slice_rows out of range");
  Tensor out(end - begin, av.c);
  std::copy(av.data.begin() + begin * av.c, av.data.begin() + end * av.c, out.data.begin());
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, begin, id](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (int64_t i = 0; i < go.r; ++i)
        for (int64_t j = 0; j < go.c; ++j) ga.at(begin + i, j) += go.at(i, j);
    };
  }
  return id;
}

Tape::Var Tape::slice_cols(Var a, int64_t begin, int64_t end) {
  const Tensor& av = val(a);
  RELGT_CHECK(0 <= begin && begin < end && end <= av.c, "slice_cols out of range");
  Tensor out(av.r, end - begin);
  for (int64_t i = 0; i < av.r; ++i)
    std::copy(av.data.begin() + i * av.c + begin, av.data.begin() + i * av.c + end,
              out.data.begin() + i * out.c);
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, begin, id](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (int64_t i = 0; i < go.r; ++i)
        for (int64_t j = 0; j < go.c; ++j) ga.at(i, begin + j) += go.at(i, j);
    };
  }
  return id;
}

Tape::Var Tape::transpose(Var a) {
  const Tensor& av = val(a);
  Tensor out(av.c, av.r);
  for (int64_t i = 0; i < av.r; ++i)
    for (int64_t j = 0; j < av.c; ++j) out.at(j, i) = av.at(i, j);
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (int64_t i = 0; i < go.r; ++i)
        for (int64_t j = 0; j < go.c; ++j) ga.at(j, i) += go.at(i, j);
    };
  }
  return id;
}

Tape::Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id](Tape& t) {
      const Tensor& go = t.g(id);
      const Tensor& av = t.val(a);
      Tensor& ga = t.g(a);
      for (size_t i = 0; i < go.data.size(); ++i)
        if (av.data[i] > 0.0) ga.data[i] += go.data[i];
    };
  }
  return id;
}

Tape::Var Tape::softmax_rows(Var a) {
  const Tensor& av = val(a);
  Tensor out(av.r, av.c);
  for (int64_t i = 0; i < av.r; ++i) {
    double mx = av.at(i, 0);
    for (int64_t j = 1; j < av.c; ++j) mx = std::max(mx, av.at(i, j));
    double sum = 0.0;
    for (int64_t j = 0; j < av.c; ++j) {
      double e = std::exp(av.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < av.c; ++j) out.at(i, j) /= sum;
  }
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id](Tape& t) {
      const Tensor& p = t.val(id);
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (int64_t i = 0; i < p.r; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < p.c; ++j) dot += go.at(i, j) * p.at(i, j);
        for (int64_t j = 0; j < p.c; ++j) ga.at(i, j) += p.at(i, j) * (go.at(i, j) - dot);
      }
    };
  }
  return id;
}

Tape::Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = val(x);
  const Tensor& gv = val(gain);
  const Tensor& bv = val(bias);
  RELGT_CHECK(gv.r == 1 && gv.c == xv.c && bv.r == 1 && bv.c == xv.c,
              "layer_norm parameter shape mismatch for " + xv.shape_str());
  Tensor norm(xv.r, xv.c);  // (x - mean) / sqrt(var + eps), saved for backward
  Tensor inv_sigma(xv.r, 1);
  Tensor out(xv.r, xv.c);
  for (int64_t i = 0; i < xv.r; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < xv.c; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(xv.c);
    double var = 0.0;
    for (int64_t j = 0; j < xv.c; ++j) {
      double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(xv.c);
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma.at(i, 0) = is;
    for (int64_t j = 0; j < xv.c; ++j) {
      norm.at(i, j) = (xv.at(i, j) - mean) * is;
      out.at(i, j) = norm.at(i, j) * gv.at(0, j) + bv.at(0, j);
    }
  }
  Var id = make_node(std::move(out), rg(x) || rg(gain) || rg(bias), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [x, gain, bias, id, norm, inv_sigma](Tape& t) {
      const Tensor& go = t.g(id);
      const Tensor& gv2 = t.val(gain);
      const int64_t C = go.c;
      if (t.rg(gain)) {
        Tensor& gg = t.g(gain);
        for (int64_t i = 0; i < go.r; ++i)
          for (int64_t j = 0; j < C; ++j) gg.at(0, j) += go.at(i, j) * norm.at(i, j);
      }
      if (t.rg(bias)) {
        Tensor& gb = t.g(bias);
        for (int64_t i = 0; i < go.r; ++i)
          for (int64_t j = 0; j < C; ++j) gb.at(0, j) += go.at(i, j);
      }
      if (t.rg(x)) {
        Tensor& gx = t.g(x);
        for (int64_t i = 0; i < go.r; ++i) {
          double mean_dy = 0.0, mean_dy_norm = 0.0;
          for (int64_t j = 0; j < C; ++j) {
            double dy = go.at(i, j) * gv2.at(0, j);
            mean_dy += dy;
            mean_dy_norm += dy * norm.at(i, j);
          }
          mean_dy /= static_cast<double>(C);
          mean_dy_norm /= static_cast<double>(C);
          for (int64_t j = 0; j < C; ++j) {
            double dy = go.at(i, j) * gv2.at(0, j);
            gx.at(i, j) +=
                inv_sigma.at(i, 0) * (dy - mean_dy - norm.at(i, j) * mean_dy_norm);
          }
        }
      }
    };
  }
  return id;
}

Tape::Var Tape::dropout(Var a, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return a;
  RELGT_CHECK(p < 1.0, "dropout probability must be < 1");
  const Tensor& av = val(a);
  std::vector<uint8_t> keep(av.data.size());
  const double inv_keep = 1.0 / (1.0 - p);
  Tensor out = av;
  for (size_t i = 0; i < out.data.size(); ++i) {
    keep[i] = rng.uniform() >= p ? 1 : 0;
    out.data[i] = keep[i] ? out.data[i] * inv_keep : 0.0;
  }
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id, keep = std::move(keep), inv_keep](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (size_t i = 0; i < go.data.size(); ++i)
        if (keep[i]) ga.data[i] += go.data[i] * inv_keep;
    };
  }
  return id;
}

Tape::Var Tape::mean_rows(Var a) {
  const Tensor& av = val(a);
  Tensor out(1, av.c);
  for (int64_t i = 0; i < av.r; ++i)
    for (int64_t j = 0; j < av.c; ++j) out.at(0, j) += av.at(i, j);
  const double inv = 1.0 / static_cast<double>(av.r);
  for (double& v : out.data) v *= inv;
  Var id = make_node(std::move(out), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id, inv](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& ga = t.g(a);
      for (int64_t i = 0; i < ga.r; ++i)
        for (int64_t j = 0; j < ga.c; ++j) ga.at(i, j) += go.at(0, j) * inv;
    };
  }
  return id;
}

Tape::Var Tape::sum_all(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  Var id = make_node(Tensor::scalar(s), rg(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [a, id](Tape& t) {
      double go = t.g(id).data[0];
      for (double& v : t.g(a).data) v += go;
    };
  }
  return id;
}

Tape::Var Tape::lookup_rows(Var table, std::vector<int64_t> idx) {
  const Tensor& tv = val(table);
  Tensor out(static_cast<int64_t>(idx.size()), tv.c);
  for (size_t i = 0; i < idx.size(); ++i) {
    RELGT_CHECK(idx[i] >= 0 && idx[i] < tv.r, "lookup row out of range");
    std::copy(tv.data.begin() + idx[i] * tv.c, tv.data.begin() + (idx[i] + 1) * tv.c,
              out.data.begin() + static_cast<int64_t>(i) * tv.c);
  }
  Var id = make_node(std::move(out), rg(table), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [table, id, idx = std::move(idx)](Tape& t) {
      const Tensor& go = t.g(id);
      Tensor& gt = t.g(table);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < go.c; ++j)
          gt.at(idx[i], j) += go.at(static_cast<int64_t>(i), j);
    };
  }
  return id;
}

Tape::Var Tape::gather_scaled_rows(std::span<const Var> inputs, int64_t out_rows, int64_t d,
                                   std::vector<GatherTerm> terms) {
  Tensor out(out_rows, d);
  bool req = false;
  for (Var x : inputs) {
    RELGT_CHECK(val(x).c == d, "gather_scaled_rows width mismatch");
    req = req || rg(x);
  }
  for (const auto& term : terms) {
    const Tensor& src = val(inputs[term.input]);
    RELGT_CHECK(term.row >= 0 && term.row < src.r, "gather term row out of range");
    RELGT_CHECK(term.out_row >= 0 && term.out_row < out_rows, "gather term out_row out of range");
    const double* srow = src.data.data() + term.row * d;
    double* orow = out.data.data() + term.out_row * d;
    for (int64_t j = 0; j < d; ++j) orow[j] += term.scale * srow[j];
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  Var id = make_node(std::move(out), req, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [ins, d, id, terms = std::move(terms)](Tape& t) {
      const Tensor& go = t.g(id);
      for (const auto& term : terms) {
        Var x = ins[term.input];
        if (!t.rg(x)) continue;
        Tensor& gx = t.g(x);
        const double* orow = go.data.data() + term.out_row * d;
        double* grow = gx.data.data() + term.row * d;
        for (int64_t j = 0; j < d; ++j) grow[j] += term.scale * orow[j];
      }
    };
  }
  return id;
}

Tape::Var Tape::bce_with_logits(Var logit, double target) {
  RELGT_CHECK(val(logit).numel() == 1, "bce_with_logits expects a scalar logit");
  double x = val(logit).data[0];
  double loss = std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
  Var id = make_node(Tensor::scalar(loss), rg(logit), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [logit, target, x, id](Tape& t) {
      double sig = 1.0 / (1.0 + std::exp(-x));
      t.g(logit).data[0] += (sig - target) * t.g(id).data[0];
    };
  }
  return id;
}

Tape::Var Tape::l1_loss(Var pred, double target) {
  RELGT_CHECK(val(pred).numel() == 1, "l1_loss expects a scalar prediction");
  double x = val(pred).data[0];
  Var id = make_node(Tensor::scalar(std::abs(x - target)), rg(pred), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].backprop = [pred, target, x, id](Tape& t) {
      double s = x > target ? 1.0 : (x < target ? -1.0 : 0.0);
      t.g(pred).data[0] += s * t.g(id).data[0];
    };
  }
  return id;
}

void Tape::backward(Var loss) {
  if (val(loss).numel() != 1)
    throw NonScalarLoss("backward() needs a scalar loss, got " + val(loss).shape_str());
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.r, n.value.c);
  nodes_[loss].grad = Tensor::scalar(1.0);
  for (Var v = loss; v >= 0; --v) {
    if (nodes_[v].requires_grad && nodes_[v].backprop) nodes_[v].backprop(*this);
  }
}

void Tape::accumulate_param_grads(ParamStore& store, double scale) const {
  for (const auto& n : nodes_) {
    if (n.param_slot < 0 || n.grad.data.empty()) continue;
    auto& g = store.entry(n.param_slot).grad;
    RELGT_CHECK(g.same_shape(n.grad), "param grad shape drift");
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * n.grad.data[i];
  }
}

GradCheckReport grad_check(ParamStore& params, const std::function<Tape::Var(Tape&)>& build,
                           double h) {
  // analytic gradients
  params.zero_grad();
  {
    Tape tape;
    Tape::Var loss = build(tape);
    tape.backward(loss);
    tape.accumulate_param_grads(params);
  }
  std::vector<Tensor> analytic;
  for (size_t s = 0; s < params.size(); ++s) analytic.push_back(params.entry(s).grad);

  auto eval = [&]() {
    Tape tape;
    Tape::Var loss = build(tape);
    return tape.val(loss).data[0];
  };

  GradCheckReport report;
  for (size_t s = 0; s < params.size(); ++s) {
    auto& value = params.entry(static_cast<int>(s)).value;
    for (size_t i = 0; i < value.data.size(); ++i) {
      double orig = value.data[i];
      value.data[i] = orig + h;
      double lp = eval();
      value.data[i] = orig - h;
      double lm = eval();
      value.data[i] = orig;
      double fd = (lp - lm) / (2.0 * h);
      double ad = analytic[s].data[i];
      double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params.entry(static_cast<int>(s)).name;
        report.worst_coord = static_cast<int64_t>(i);
      }
    }
  }
  return report;
}

}  // namespace relgt
