#include "smdris/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

namespace smdris {

namespace {

struct Plane {
  int h = 0;
  int w = 0;
  std::vector<Real> v;

  Plane() = default;
  Plane(int h_, int w_, Real fill = 0.0) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}
  Real& operator()(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  Real operator()(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

void require_rgb(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument(std::string(what) + ": expected a single RGB image {1,3,H,W}, got " + s.str());
  }
}

Plane channel(const Tensor& image, int n, int c, Real gain = 1.0) {
  Plane p(image.shape().h, image.shape().w);
  const Real* src = image.plane(n, c);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = src[i] * gain;
  return p;
}

Plane luma(const Tensor& image, int n, Real gain = 1.0) {
  Plane p(image.shape().h, image.shape().w);
  const Real* r = image.plane(n, 0);
  const Real* g = image.plane(n, 1);
  const Real* b = image.plane(n, 2);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = gain * (kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i]);
  return p;
}

// Half-sample symmetric index (d c b a | a b c d).
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

// 3x3 Sobel responses along y and x with symmetric borders.
void sobel(const Plane& p, Plane& gy, Plane& gx) {
  gy = Plane(p.h, p.w);
  gx = Plane(p.h, p.w);
  for (int y = 0; y < p.h; ++y) {
    const int ym = reflect(y - 1, p.h), yp = reflect(y + 1, p.h);
    for (int x = 0; x < p.w; ++x) {
      const int xm = reflect(x - 1, p.w), xp = reflect(x + 1, p.w);
      gy(y, x) = (p(yp, xm) + 2 * p(yp, x) + p(yp, xp)) - (p(ym, xm) + 2 * p(ym, x) + p(ym, xp));
      gx(y, x) = (p(ym, xp) + 2 * p(y, xp) + p(yp, xp)) - (p(ym, xm) + 2 * p(y, xm) + p(yp, xm));
    }
  }
}

// ---------------------------------------------------------------------------
// SSIM

constexpr int kSsimRadius = 5;
constexpr Real kSsimSigma = 1.5;

std::array<Real, 2 * kSsimRadius + 1> gaussian_window() {
  std::array<Real, 2 * kSsimRadius + 1> g{};
  Real sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    g[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[static_cast<std::size_t>(i + kSsimRadius)];
  }
  for (Real& v : g) v /= sum;
  return g;
}

// Separable Gaussian filter evaluated only where the window fits.
Plane filter_valid(const Plane& p) {
  static const auto g = gaussian_window();
  const int K = 2 * kSsimRadius + 1;
  Plane rows(p.h, p.w - K + 1);
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < rows.w; ++x) {
      Real s = 0.0;
      for (int k = 0; k < K; ++k) s += g[static_cast<std::size_t>(k)] * p(y, x + k);
      rows(y, x) = s;
    }
  }
  Plane out(p.h - K + 1, rows.w);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      Real s = 0.0;
      for (int k = 0; k < K; ++k) s += g[static_cast<std::size_t>(k)] * rows(y + k, x);
      out(y, x) = s;
    }
  }
  return out;
}

Real ssim_planes(const Plane& a, const Plane& b) {
  constexpr Real C1 = 0.01 * 0.01;
  constexpr Real C2 = 0.03 * 0.03;
  Plane aa(a.h, a.w), bb(a.h, a.w), ab(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane ma = filter_valid(a), mb = filter_valid(b);
  const Plane saa = filter_valid(aa), sbb = filter_valid(bb), sab = filter_valid(ab);
  Real sum = 0.0;
  for (std::size_t i = 0; i < ma.v.size(); ++i) {
    const Real mx = ma.v[i], my = mb.v[i];
    const Real vx = saa.v[i] - mx * mx, vy = sbb.v[i] - my * my, cxy = sab.v[i] - mx * my;
    sum += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
  }
  return sum / static_cast<Real>(ma.v.size());
}

void require_ssim_extent(const Shape& s) {
  if (s.h < 2 * kSsimRadius + 1 || s.w < 2 * kSsimRadius + 1) {
    throw std::invalid_argument("ssim: image " + s.str() + " is smaller than the 11x11 window");
  }
}

// ---------------------------------------------------------------------------
// UIQM pieces (0-255 scale)

Real trimmed_mean(std::vector<Real> x, Real alpha) {
  std::sort(x.begin(), x.end());
  const std::size_t K = x.size();
  const auto lo = static_cast<std::size_t>(std::ceil(alpha * static_cast<Real>(K)));
  const auto hi = static_cast<std::size_t>(std::floor(alpha * static_cast<Real>(K)));
  if (lo + hi >= K) return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<Real>(K);
  return std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(lo), x.end() - static_cast<std::ptrdiff_t>(hi), 0.0) /
         static_cast<Real>(K - lo - hi);
}

Real spread(const std::vector<Real>& x, Real mu) {
  Real s = 0.0;
  for (Real v : x) s += (v - mu) * (v - mu);
  return s / static_cast<Real>(x.size());
}

// Block grid centered on the image so that flips map blocks onto blocks.
struct BlockGrid {
  int size_y, size_x, count_y, count_x, off_y, off_x;
};

BlockGrid block_grid(int h, int w, int block) {
  BlockGrid g{};
  g.size_y = std::min(block, h);
  g.size_x = std::min(block, w);
  g.count_y = h / g.size_y;
  g.count_x = w / g.size_x;
  g.off_y = (h - g.count_y * g.size_y) / 2;
  g.off_x = (w - g.count_x * g.size_x) / 2;
  return g;
}

Real eme(const Plane& p, int block) {
  const BlockGrid g = block_grid(p.h, p.w, block);
  Real val = 0.0;
  for (int by = 0; by < g.count_y; ++by) {
    for (int bx = 0; bx < g.count_x; ++bx) {
      Real mx = -INFINITY, mn = INFINITY;
      for (int y = 0; y < g.size_y; ++y) {
        for (int x = 0; x < g.size_x; ++x) {
          const Real v = p(g.off_y + by * g.size_y + y, g.off_x + bx * g.size_x + x);
          mx = std::max(mx, v);
          mn = std::min(mn, v);
        }
      }
      if (mn > 0.0 && mx > 0.0) val += std::log(mx / mn);
    }
  }
  return 2.0 / (static_cast<Real>(g.count_y) * g.count_x) * val;
}

Real logamee(const std::array<Plane, 3>& rgb, int block) {
  const BlockGrid g = block_grid(rgb[0].h, rgb[0].w, block);
  Real val = 0.0;
  for (int by = 0; by < g.count_y; ++by) {
    for (int bx = 0; bx < g.count_x; ++bx) {
      Real mx = -INFINITY, mn = INFINITY;
      for (const Plane& p : rgb) {
        for (int y = 0; y < g.size_y; ++y) {
          for (int x = 0; x < g.size_x; ++x) {
            const Real v = p(g.off_y + by * g.size_y + y, g.off_x + bx * g.size_x + x);
            mx = std::max(mx, v);
            mn = std::min(mn, v);
          }
        }
      }
      const Real top = mx - mn, bot = mx + mn;
      if (top > 0.0 && bot > 0.0) val += (top / bot) * std::log(top / bot);
    }
  }
  return -1.0 / (static_cast<Real>(g.count_y) * g.count_x) * val;
}

// ---------------------------------------------------------------------------
// CEIQ pieces

cv::Mat gray_u8(const Tensor& image) {
  const Plane y = luma(image, 0, 255.0);
  cv::Mat m(y.h, y.w, CV_8UC1);
  for (int r = 0; r < y.h; ++r) {
    for (int c = 0; c < y.w; ++c) m.at<std::uint8_t>(r, c) = cv::saturate_cast<std::uint8_t>(std::round(y(r, c)));
  }
  return m;
}

std::array<Real, 256> histogram(const cv::Mat& m) {
  std::array<Real, 256> h{};
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) h[m.at<std::uint8_t>(r, c)] += 1.0;
  }
  const Real n = static_cast<Real>(m.total());
  for (Real& v : h) v /= n;
  return h;
}

Real entropy(const std::array<Real, 256>& p) {
  Real e = 0.0;
  for (Real v : p) {
    if (v > 0.0) e -= v * std::log2(v);
  }
  return e;
}

Real cross_entropy(const std::array<Real, 256>& p, const std::array<Real, 256>& q) {
  constexpr Real kFloor = 1e-12;
  Real e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) e -= p[i] * std::log2(std::max(q[i], kFloor));
  }
  return e;
}

Plane to_plane(const cv::Mat& m) {
  Plane p(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) p(r, c) = m.at<std::uint8_t>(r, c) / 255.0;
  }
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

MseRmse mse_rmse(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "mse");
  if (pred.numel() == 0) throw std::invalid_argument("mse: empty images");
  Real s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const Real d = pred[i] - target[i];
    s += d * d;
  }
  const Real mse = s / static_cast<Real>(pred.numel());
  return {mse, std::sqrt(mse)};
}

Real psnr(const Tensor& pred, const Tensor& target) {
  const Real mse = mse_rmse(pred, target).mse;
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Real ssim_plane(const Tensor& a, const Tensor& b) {
  require_same(a, b, "ssim");
  if (a.shape().c != 1) throw std::invalid_argument("ssim_plane: expected single-channel planes");
  require_ssim_extent(a.shape());
  Real sum = 0.0;
  for (int n = 0; n < a.shape().n; ++n) sum += ssim_planes(channel(a, n, 0), channel(b, n, 0));
  return sum / a.shape().n;
}

Real ssim(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "ssim");
  if (pred.shape().c != 3) throw std::invalid_argument("ssim: expected RGB images, got " + pred.shape().str());
  require_ssim_extent(pred.shape());
  Real sum = 0.0;
  for (int n = 0; n < pred.shape().n; ++n) sum += ssim_planes(luma(pred, n), luma(target, n));
  return sum / pred.shape().n;
}

Lab rgb_to_lab(Real r, Real g, Real b) {
  auto lin = [](Real c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
  const Real R = lin(r), G = lin(g), B = lin(b);
  const Real X = (0.412453 * R + 0.357580 * G + 0.180423 * B) / 0.950456;
  const Real Y = 0.212671 * R + 0.715160 * G + 0.072169 * B;
  const Real Z = (0.019334 * R + 0.119193 * G + 0.950227 * B) / 1.088754;
  auto f = [](Real t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  const Real L = Y > 0.008856 ? 116.0 * std::cbrt(Y) - 16.0 : 903.3 * Y;
  return {L, 500.0 * (f(X) - f(Y)), 200.0 * (f(Y) - f(Z))};
}

UiqmParts uiqm_parts(const Tensor& image, const NoReferenceConstants& k) {
  require_rgb(image, "uiqm");
  const std::array<Plane, 3> rgb{channel(image, 0, 0, 255.0), channel(image, 0, 1, 255.0), channel(image, 0, 2, 255.0)};
  UiqmParts out;

  std::vector<Real> rg(rgb[0].v.size()), yb(rgb[0].v.size());
  for (std::size_t i = 0; i < rg.size(); ++i) {
    rg[i] = rgb[0].v[i] - rgb[1].v[i];
    yb[i] = 0.5 * (rgb[0].v[i] + rgb[1].v[i]) - rgb[2].v[i];
  }
  const Real mu_rg = trimmed_mean(rg, k.uicm_alpha), mu_yb = trimmed_mean(yb, k.uicm_alpha);
  const Real s2 = spread(rg, mu_rg) + spread(yb, mu_yb);
  out.uicm = -0.0268 * std::hypot(mu_rg, mu_yb) + 0.1586 * std::sqrt(s2);

  static const Real lambda[3] = {kLumaR, kLumaG, kLumaB};
  for (int c = 0; c < 3; ++c) {
    Plane gy, gx;
    sobel(rgb[static_cast<std::size_t>(c)], gy, gx);
    Plane edge(gy.h, gy.w);
    Real peak = 0.0;
    for (std::size_t i = 0; i < edge.v.size(); ++i) {
      edge.v[i] = std::hypot(gy.v[i], gx.v[i]);
      peak = std::max(peak, edge.v[i]);
    }
    if (peak > 0.0) {
      for (std::size_t i = 0; i < edge.v.size(); ++i) edge.v[i] *= 255.0 / peak * rgb[static_cast<std::size_t>(c)].v[i];
    }
    out.uism += lambda[c] * eme(edge, k.uiqm_block);
  }

  out.uiconm = logamee(rgb, k.uiqm_block);
  out.value = k.uiqm_c1 * out.uicm + k.uiqm_c2 * out.uism + k.uiqm_c3 * out.uiconm;
  return out;
}

UciqeParts uciqe_parts(const Tensor& image, const NoReferenceConstants& k) {
  require_rgb(image, "uciqe");
  const std::size_t N = image.shape().plane();
  const Real* r = image.plane(0, 0);
  const Real* g = image.plane(0, 1);
  const Real* b = image.plane(0, 2);
  std::vector<Real> L(N), chroma(N);
  Real sat = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const Lab lab = rgb_to_lab(r[i], g[i], b[i]);
    L[i] = lab.l / 100.0;
    chroma[i] = std::hypot(lab.a, lab.b) / 100.0;
    if (L[i] > 0.0) sat += chroma[i] / L[i];
  }
  UciqeParts out;
  const Real mean_c = std::accumulate(chroma.begin(), chroma.end(), 0.0) / static_cast<Real>(N);
  out.chroma_std = std::sqrt(spread(chroma, mean_c));
  std::sort(L.begin(), L.end());
  const std::size_t tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 * static_cast<Real>(N))));
  const Real low = std::accumulate(L.begin(), L.begin() + static_cast<std::ptrdiff_t>(tail), 0.0) / static_cast<Real>(tail);
  const Real high = std::accumulate(L.end() - static_cast<std::ptrdiff_t>(tail), L.end(), 0.0) / static_cast<Real>(tail);
  out.luma_contrast = high - low;
  out.saturation_mean = sat / static_cast<Real>(N);
  out.value = k.uciqe_w1 * out.chroma_std + k.uciqe_w2 * out.luma_contrast + k.uciqe_w3 * out.saturation_mean;
  return out;
}

CcfParts ccf_parts(const Tensor& image, const NoReferenceConstants& k) {
  require_rgb(image, "ccf");
  const Plane y = luma(image, 0, 255.0);
  Plane gy, gx;
  sobel(y, gy, gx);
  Real energy = 0.0;
  for (std::size_t i = 0; i < gy.v.size(); ++i) energy += gy.v[i] * gy.v[i] + gx.v[i] * gx.v[i];
  CcfParts out;
  out.contrast = std::sqrt(energy / static_cast<Real>(gy.v.size()));

  const int H = y.h, W = y.w;
  Plane pixel_min(H, W);
  for (int c = 0; c < 3; ++c) {
    const Real* p = image.plane(0, c);
    for (std::size_t i = 0; i < pixel_min.v.size(); ++i) {
      pixel_min.v[i] = c == 0 ? 255.0 * p[i] : std::min(pixel_min.v[i], 255.0 * p[i]);
    }
  }
  const int r = k.ccf_dark_patch / 2;
  Plane rows(H, W), dark(H, W);
  for (int yy = 0; yy < H; ++yy) {
    for (int xx = 0; xx < W; ++xx) {
      Real m = INFINITY;
      for (int d = -r; d <= r; ++d) m = std::min(m, pixel_min(yy, std::clamp(xx + d, 0, W - 1)));
      rows(yy, xx) = m;
    }
  }
  for (int yy = 0; yy < H; ++yy) {
    for (int xx = 0; xx < W; ++xx) {
      Real m = INFINITY;
      for (int d = -r; d <= r; ++d) m = std::min(m, rows(std::clamp(yy + d, 0, H - 1), xx));
      dark(yy, xx) = m;
    }
  }
  const Real mean_d = std::accumulate(dark.v.begin(), dark.v.end(), 0.0) / static_cast<Real>(dark.v.size());
  out.fog = std::sqrt(spread(dark.v, mean_d));
  out.value = k.ccf_contrast * out.contrast + k.ccf_fog * out.fog;
  return out;
}

CeiqParts ceiq_parts(const Tensor& image, const NoReferenceConstants& k) {
  require_rgb(image, "ceiq");
  const cv::Mat gray = gray_u8(image);
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(gray, &lo, &hi);
  CeiqParts out;
  if (lo == hi) return out;  // single grey level: zero entropy, bottom of the score range
  require_ssim_extent(image.shape());
  cv::Mat eq;
  cv::equalizeHist(gray, eq);
  const auto p = histogram(gray);
  const auto q = histogram(eq);
  out.ssim_eq = ssim_planes(to_plane(gray), to_plane(eq));
  out.entropy = entropy(p);
  out.entropy_eq = entropy(q);
  out.cross_entropy = cross_entropy(p, q);
  out.cross_entropy_rev = cross_entropy(q, p);
  const Real raw = k.ceiq_ssim * out.ssim_eq + k.ceiq_entropy * out.entropy + k.ceiq_entropy_eq * out.entropy_eq +
                   k.ceiq_cross_entropy * out.cross_entropy + k.ceiq_cross_entropy_rev * out.cross_entropy_rev;
  out.value = std::max(0.0, raw);
  return out;
}

// ---------------------------------------------------------------------------

std::optional<Direction> metric_direction(const std::string& name) {
  static const std::pair<const char*, Direction> known[] = {
      {"PSNR", Direction::higher}, {"MSE", Direction::lower},    {"RMSE", Direction::lower},
      {"SSIM", Direction::higher}, {"VSI", Direction::higher},   {"FSIM", Direction::higher},
      {"FSIMc", Direction::higher}, {"UIQM", Direction::higher}, {"UCIQE", Direction::higher},
      {"CCF", Direction::higher},  {"CEIQ", Direction::higher},
  };
  for (const auto& [n, d] : known) {
    if (name == n) return d;
  }
  return std::nullopt;
}

void MetricReport::set(const std::string& name, Real value, Direction direction) {
  for (MetricValue& m : values_) {
    if (m.name == name) {
      m.value = value;
      m.direction = direction;
      return;
    }
  }
  values_.push_back({name, value, direction});
}

void MetricReport::set(const std::string& name, Real value) {
  const auto d = metric_direction(name);
  if (!d) throw std::invalid_argument("unknown metric '" + name + "'; pass its direction explicitly");
  set(name, value, *d);
}

std::optional<Real> MetricReport::get(const std::string& name) const {
  for (const MetricValue& m : values_) {
    if (m.name == name) return m.value;
  }
  return std::nullopt;
}

Real all_score(const MetricReport& report) {
  Real s = 0.0;
  for (const MetricValue& m : report.values()) s += m.direction == Direction::higher ? m.value : -m.value;
  return s;
}

Real aggregative(Real metric_sum, Real seconds_per_image) {
  if (seconds_per_image < 0.0) throw std::invalid_argument("aggregative: negative time");
  return metric_sum - seconds_per_image;
}

MetricReport evaluate_image(const Tensor& restored, const Tensor* reference, const EvalOptions& options) {
  MetricReport r;
  if (options.paired) {
    if (reference == nullptr) throw std::invalid_argument("evaluate_image: paired evaluation needs a reference");
    const MseRmse m = mse_rmse(restored, *reference);
    r.set("PSNR", psnr(restored, *reference));
    r.set("MSE", options.paper_compat ? m.rmse : m.mse);
    r.set("SSIM", ssim(restored, *reference));
  }
  r.set("UIQM", uiqm(restored, options.constants));
  r.set("UCIQE", uciqe(restored, options.constants));
  r.set("CCF", ccf_no_color(restored, options.constants));
  r.set("CEIQ", ceiq(restored, options.constants));
  return r;
}

EvalRow EvalTable::mean_row() const {
  EvalRow mean;
  mean.id = "mean";
  if (rows.empty()) return mean;
  for (const MetricValue& m : rows.front().metrics.values()) {
    Real s = 0.0;
    for (const EvalRow& row : rows) s += row.metrics.get(m.name).value_or(0.0);
    mean.metrics.set(m.name, s / static_cast<Real>(rows.size()), m.direction);
  }
  for (const EvalRow& row : rows) mean.seconds += row.seconds;
  mean.seconds /= static_cast<Real>(rows.size());
  return mean;
}

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

void EvalTable::write_csv(const std::filesystem::path& path) const {
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::vector<MetricValue> cols = rows.empty() ? std::vector<MetricValue>{} : rows.front().metrics.values();
  os << "# directions:";
  for (const MetricValue& m : cols) os << ' ' << m.name << (m.direction == Direction::higher ? "=up" : "=down");
  os << " ALL=up\n";
  os << "id";
  for (const MetricValue& m : cols) os << ',' << m.name;
  os << ",ALL,seconds\n";
  os << std::setprecision(10);
  std::vector<EvalRow> all = rows;
  all.push_back(mean_row());
  for (const EvalRow& row : all) {
    os << row.id;
    for (const MetricValue& m : cols) os << ',' << row.metrics.get(m.name).value_or(0.0);
    os << ',' << all_score(row.metrics) << ',' << row.seconds << '\n';
  }
}

void EvalTable::write_json(const std::filesystem::path& path) const {
  ensure_parent(path);
  nlohmann::json j;
  auto encode = [](const EvalRow& row) {
    nlohmann::json r;
    r["id"] = row.id;
    for (const MetricValue& m : row.metrics.values()) r[m.name] = m.value;
    r["ALL"] = all_score(row.metrics);
    r["seconds"] = row.seconds;
    return r;
  };
  nlohmann::json dirs = nlohmann::json::object();
  if (!rows.empty()) {
    for (const MetricValue& m : rows.front().metrics.values()) {
      dirs[m.name] = m.direction == Direction::higher ? "higher" : "lower";
    }
  }
  dirs["ALL"] = "higher";
  j["directions"] = dirs;
  j["rows"] = nlohmann::json::array();
  for (const EvalRow& row : rows) j["rows"].push_back(encode(row));
  j["mean"] = encode(mean_row());
  j["skipped"] = skipped;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace smdris
