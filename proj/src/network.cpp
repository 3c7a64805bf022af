#include "posefix/network.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Core>

#include "json_util.hpp"
#include "posefix/error.hpp"

namespace posefix {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
void im2col(const T* in, int c, int h, int w, int k, int stride, int out_h, int out_w, T* col) {
  const int pad = k / 2;
  const int n = out_h * out_w;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + static_cast<std::size_t>((ch * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int out_h, int out_w, T* in) {
  const int pad = k / 2;
  const int n = out_h * out_w;
  std::fill(in, in + static_cast<std::size_t>(c) * h * w, T(0));
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + static_cast<std::size_t>((ch * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = in + (static_cast<std::size_t>(ch) * h + iy) * w;
          const T* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<Architecture::Shape> Architecture::shapes() const {
  std::vector<Shape> s{{in_channels, in_height, in_width}};
  for (const auto& l : layers) {
    const Shape prev = s.back();
    if (l.kind == LayerSpec::Kind::upsample2x) {
      s.push_back({prev.channels, prev.height * 2, prev.width * 2});
    } else {
      const int pad = l.kernel / 2;
      s.push_back({l.out_channels, (prev.height + 2 * pad - l.kernel) / l.stride + 1,
                   (prev.width + 2 * pad - l.kernel) / l.stride + 1});
    }
  }
  return s;
}

std::size_t Architecture::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    if (l.kind == LayerSpec::Kind::conv)
      n += static_cast<std::size_t>(l.out_channels) *
               (static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel) +
           static_cast<std::size_t>(l.out_channels);
  return n;
}

void Architecture::validate() const {
  require(in_channels > 0 && in_height > 0 && in_width > 0, "architecture: bad input shape");
  int channels = in_channels;
  for (const auto& l : layers) {
    if (l.kind == LayerSpec::Kind::conv) {
      require(l.in_channels == channels, "architecture: channel mismatch between layers");
      require(l.out_channels > 0 && l.kernel > 0 && l.kernel % 2 == 1 && l.stride > 0,
              "architecture: bad convolution parameters");
      channels = l.out_channels;
    }
  }
  for (const auto& s : shapes())
    require(s.height > 0 && s.width > 0, "architecture: a layer collapses the map");
}

nlohmann::json Architecture::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : layers) {
    if (l.kind == LayerSpec::Kind::upsample2x) {
      ls.push_back({{"kind", "upsample2x"}});
    } else {
      ls.push_back({{"kind", "conv"},
                    {"in", l.in_channels},
                    {"out", l.out_channels},
                    {"kernel", l.kernel},
                    {"stride", l.stride},
                    {"relu", l.relu}});
    }
  }
  return {{"in_channels", in_channels},
          {"in_height", in_height},
          {"in_width", in_width},
          {"layers", ls}};
}

Architecture Architecture::from_json(const nlohmann::json& doc) {
  using detail::field;
  Architecture a;
  a.in_channels = field<int>(doc, "in_channels", "architecture");
  a.in_height = field<int>(doc, "in_height", "architecture");
  a.in_width = field<int>(doc, "in_width", "architecture");
  const auto& ls = doc.at("layers");
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const std::string where = "architecture.layers[" + std::to_string(i) + "]";
    LayerSpec l;
    const auto kind = field<std::string>(ls[i], "kind", where);
    if (kind == "upsample2x") {
      l.kind = LayerSpec::Kind::upsample2x;
    } else if (kind == "conv") {
      l.in_channels = field<int>(ls[i], "in", where);
      l.out_channels = field<int>(ls[i], "out", where);
      l.kernel = field<int>(ls[i], "kernel", where);
      l.stride = field<int>(ls[i], "stride", where);
      l.relu = field<bool>(ls[i], "relu", where);
    } else {
      detail::schema_error(where + ".kind", "unknown layer kind '" + kind + "'");
    }
    a.layers.push_back(l);
  }
  try {
    a.validate();
  } catch (const Error& e) {
    detail::schema_error("architecture", e.what());
  }
  return a;
}

Architecture toy_architecture(int in_channels, int joints, int in_width, int in_height,
                              int narrow_width, int wide_width, int upsample_count) {
  using K = LayerSpec::Kind;
  Architecture a{in_channels, in_height, in_width, {}};
  a.layers.push_back({K::conv, in_channels, narrow_width, 3, 2, true});
  a.layers.push_back({K::conv, narrow_width, wide_width, 3, 2, true});
  a.layers.push_back({K::conv, wide_width, wide_width, 3, 1, true});
  a.layers.push_back({K::conv, wide_width, wide_width, 3, 1, true});
  int channels = wide_width;
  for (int u = 0; u < upsample_count; ++u) {
    a.layers.push_back({K::upsample2x, 0, 0, 0, 0, false});
    a.layers.push_back({K::conv, channels, narrow_width, 3, 1, true});
    channels = narrow_width;
  }
  a.layers.push_back({K::conv, channels, joints, 1, 1, false});
  a.validate();
  return a;
}

Architecture miniature_architecture(int in_channels, int joints, int width, int height,
                                    int hidden) {
  using K = LayerSpec::Kind;
  Architecture a{in_channels, height, width, {}};
  a.layers.push_back({K::conv, in_channels, hidden, 3, 1, true});
  a.layers.push_back({K::conv, hidden, joints, 3, 1, false});
  a.validate();
  return a;
}

std::vector<std::uint8_t> influence_mask(const Architecture& arch, int x, int y) {
  const auto shapes = arch.shapes();
  require(x >= 0 && x < shapes[0].width && y >= 0 && y < shapes[0].height,
          "influence_mask: pixel outside the input");
  std::vector<std::uint8_t> cur(static_cast<std::size_t>(shapes[0].height) * shapes[0].width, 0);
  cur[static_cast<std::size_t>(y) * shapes[0].width + x] = 1;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const auto& l = arch.layers[li];
    const auto in = shapes[li];
    const auto out = shapes[li + 1];
    std::vector<std::uint8_t> next(static_cast<std::size_t>(out.height) * out.width, 0);
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        bool hit = false;
        if (l.kind == LayerSpec::Kind::upsample2x) {
          hit = cur[static_cast<std::size_t>(oy / 2) * in.width + ox / 2] != 0;
        } else {
          const int pad = l.kernel / 2;
          for (int ky = 0; ky < l.kernel && !hit; ++ky) {
            for (int kx = 0; kx < l.kernel && !hit; ++kx) {
              const int iy = oy * l.stride + ky - pad;
              const int ix = ox * l.stride + kx - pad;
              if (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width)
                hit = cur[static_cast<std::size_t>(iy) * in.width + ix] != 0;
            }
          }
        }
        next[static_cast<std::size_t>(oy) * out.width + ox] = hit ? 1 : 0;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

template <class T>
ConvNet<T>::ConvNet(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  shapes_ = arch_.shapes();
  std::size_t offset = 0;
  for (const auto& l : arch_.layers) {
    Offsets o;
    if (l.kind == LayerSpec::Kind::conv) {
      o.weights = offset;
      offset += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
      o.bias = offset;
      offset += static_cast<std::size_t>(l.out_channels);
    }
    offsets_.push_back(o);
  }
  params_.assign(offset, T(0));
}

template <class T>
void ConvNet<T>::init_gaussian(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  std::fill(params_.begin(), params_.end(), T(0));
  for (std::size_t li = 0; li < arch_.layers.size(); ++li) {
    const auto& l = arch_.layers[li];
    if (l.kind != LayerSpec::Kind::conv) continue;
    const std::size_t n = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
    for (std::size_t i = 0; i < n; ++i) params_[offsets_[li].weights + i] = static_cast<T>(normal(rng));
  }
}

template <class T>
void ConvNet<T>::forward(std::span<const T> input, Workspace& ws) const {
  const auto& s0 = shapes_[0];
  require(input.size() == static_cast<std::size_t>(s0.channels) * s0.height * s0.width,
          "ConvNet::forward: input size does not match the architecture");
  const std::size_t nl = arch_.layers.size();
  ws.activations.resize(nl + 1);
  ws.columns.resize(nl);
  ws.activations[0].assign(input.begin(), input.end());
  for (std::size_t li = 0; li < nl; ++li) {
    const auto& l = arch_.layers[li];
    const auto in = shapes_[li];
    const auto out = shapes_[li + 1];
    const auto& x = ws.activations[li];
    auto& y = ws.activations[li + 1];
    y.assign(static_cast<std::size_t>(out.channels) * out.height * out.width, T(0));
    if (l.kind == LayerSpec::Kind::upsample2x) {
      for (int c = 0; c < out.channels; ++c)
        for (int oy = 0; oy < out.height; ++oy)
          for (int ox = 0; ox < out.width; ++ox)
            y[(static_cast<std::size_t>(c) * out.height + oy) * out.width + ox] =
                x[(static_cast<std::size_t>(c) * in.height + oy / 2) * in.width + ox / 2];
      continue;
    }
    const int n = out.height * out.width;
    const int rows = l.in_channels * l.kernel * l.kernel;
    auto& col = ws.columns[li];
    col.resize(static_cast<std::size_t>(rows) * n);
    im2col(x.data(), in.channels, in.height, in.width, l.kernel, l.stride, out.height, out.width,
           col.data());
    ConstMatrixMap<T> w(params_.data() + offsets_[li].weights, l.out_channels, rows);
    ConstMatrixMap<T> cm(col.data(), rows, n);
    MatrixMap<T> ym(y.data(), l.out_channels, n);
    ym.noalias() = w * cm;
    for (int o = 0; o < l.out_channels; ++o) {
      const T b = params_[offsets_[li].bias + static_cast<std::size_t>(o)];
      T* row = y.data() + static_cast<std::size_t>(o) * n;
      for (int i = 0; i < n; ++i) {
        const T v = row[i] + b;
        row[i] = (l.relu && v < T(0)) ? T(0) : v;
      }
    }
  }
}

template <class T>
void ConvNet<T>::backward(Workspace& ws, std::span<const T> grad_output,
                          std::span<T> grad_params) const {
  require(grad_params.size() == params_.size(), "ConvNet::backward: gradient size mismatch");
  const std::size_t nl = arch_.layers.size();
  require(ws.activations.size() == nl + 1, "ConvNet::backward: run forward first");
  require(grad_output.size() == ws.activations.back().size(),
          "ConvNet::backward: output gradient size mismatch");
  std::vector<T>& g = ws.grad_a;
  std::vector<T>& g_prev = ws.grad_b;
  g.assign(grad_output.begin(), grad_output.end());
  for (std::size_t li = nl; li-- > 0;) {
    const auto& l = arch_.layers[li];
    const auto in = shapes_[li];
    const auto out = shapes_[li + 1];
    const bool need_input_grad = li > 0;
    if (l.kind == LayerSpec::Kind::upsample2x) {
      g_prev.assign(static_cast<std::size_t>(in.channels) * in.height * in.width, T(0));
      for (int c = 0; c < out.channels; ++c)
        for (int oy = 0; oy < out.height; ++oy)
          for (int ox = 0; ox < out.width; ++ox)
            g_prev[(static_cast<std::size_t>(c) * in.height + oy / 2) * in.width + ox / 2] +=
                g[(static_cast<std::size_t>(c) * out.height + oy) * out.width + ox];
      std::swap(g, g_prev);
      continue;
    }
    const int n = out.height * out.width;
    const int rows = l.in_channels * l.kernel * l.kernel;
    if (l.relu) {
      const auto& y = ws.activations[li + 1];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > T(0))) g[i] = T(0);
    }
    ConstMatrixMap<T> gm(g.data(), l.out_channels, n);
    ConstMatrixMap<T> cm(ws.columns[li].data(), rows, n);
    MatrixMap<T> gw(grad_params.data() + offsets_[li].weights, l.out_channels, rows);
    gw.noalias() += gm * cm.transpose();
    for (int o = 0; o < l.out_channels; ++o) {
      T acc = T(0);
      const T* row = g.data() + static_cast<std::size_t>(o) * n;
      for (int i = 0; i < n; ++i) acc += row[i];
      grad_params[offsets_[li].bias + static_cast<std::size_t>(o)] += acc;
    }
    if (!need_input_grad) break;
    ConstMatrixMap<T> w(params_.data() + offsets_[li].weights, l.out_channels, rows);
    auto& col = ws.columns[li];
    MatrixMap<T> dcol(col.data(), rows, n);
    dcol.noalias() = w.transpose() * gm;
    g_prev.resize(static_cast<std::size_t>(in.channels) * in.height * in.width);
    col2im(col.data(), in.channels, in.height, in.width, l.kernel, l.stride, out.height, out.width,
           g_prev.data());
    std::swap(g, g_prev);
  }
}

template class ConvNet<float>;
template class ConvNet<double>;

}  // namespace posefix
