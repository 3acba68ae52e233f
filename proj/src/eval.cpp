#include "stvsr/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace stvsr {

namespace {

std::vector<double> gaussian_1d(Index size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (Index i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& x, const std::vector<double>& g) {
  const Index k = static_cast<Index>(g.size());
  const Index h = x.rows(), w = x.cols();
  Eigen::ArrayXXd rows = Eigen::ArrayXXd::Zero(h, w - k + 1);
  for (Index i = 0; i < k; ++i) rows += g[static_cast<std::size_t>(i)] * x.middleCols(i, w - k + 1);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(h - k + 1, w - k + 1);
  for (Index i = 0; i < k; ++i) out += g[static_cast<std::size_t>(i)] * rows.middleRows(i, h - k + 1);
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void psnr_json(nlohmann::json& obj, const std::string& key, double v) {
  if (std::isinf(v) || std::isnan(v)) {
    obj[key] = nullptr;
    obj[key + "_inf"] = std::isinf(v);
  } else {
    obj[key] = v;
  }
}

nlohmann::json aggregate_json(const Aggregate& a) {
  nlohmann::json j;
  j["clips"] = a.clips;
  psnr_json(j, "psnr_avg", a.psnr_avg);
  j["ssim_avg"] = a.ssim_avg;
  psnr_json(j, "psnr_vfi", a.psnr_vfi);
  j["ssim_vfi"] = a.ssim_vfi;
  return j;
}

fs::path clip_dir(const fs::path& root, const std::string& id) {
  const fs::path nested = root / "sequences" / id;
  return fs::is_directory(nested) ? nested : root / id;
}

std::vector<Frame> read_clip(const fs::path& dir, Index frames) {
  std::vector<Frame> out;
  for (Index i = 1; i <= frames; ++i) out.push_back(read_png(dir / ("im" + std::to_string(i) + ".png")));
  return out;
}

}  // namespace

double psnr(const Frame& a, const Frame& b, double peak, bool luma_only) {
  require_shape(b.shape(), a.shape(), "psnr");
  double mse = 0.0;
  if (luma_only) {
    mse = (luma(a) - luma(b)).square().mean();
  } else {
    mse = (a.values().cast<double>() - b.values().cast<double>()).square().mean();
  }
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

Index ssim_window(Index h, Index w, Index preferred) {
  if (h < 8 || w < 8)
    throw std::invalid_argument("ssim needs frames of at least 8x8, got " + std::to_string(h) + "x" +
                                std::to_string(w));
  Index k = std::min({preferred, h, w});
  if (k % 2 == 0) --k;
  return k;
}

std::vector<double> gaussian_window(Index size, double sigma) {
  const auto g = gaussian_1d(size, sigma);
  std::vector<double> out;
  for (double gy : g)
    for (double gx : g) out.push_back(gy * gx);
  return out;
}

double ssim(const Frame& a, const Frame& b, const SsimOptions& o) {
  require_shape(b.shape(), a.shape(), "ssim");
  const Eigen::ArrayXXd x = luma(a), y = luma(b);
  const auto g = gaussian_1d(ssim_window(x.rows(), x.cols(), o.window), o.sigma);
  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak), c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  const Eigen::ArrayXXd mx = filter_valid(x, g), my = filter_valid(y, g);
  const Eigen::ArrayXXd sxx = filter_valid(x * x, g) - mx * mx;
  const Eigen::ArrayXXd syy = filter_valid(y * y, g) - my * my;
  const Eigen::ArrayXXd sxy = filter_valid(x * y, g) - mx * my;
  const Eigen::ArrayXXd map = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                              ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean();
}

ClipReport score_clip(const std::string& id, const std::vector<Frame>& pred,
                      const std::vector<Frame>& gt, bool luma_psnr) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("clip " + id + ": " + std::to_string(pred.size()) +
                                " predicted frames vs " + std::to_string(gt.size()));
  ClipReport report;
  report.clip = id;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    FrameScore s;
    s.frame = static_cast<Index>(i) + 1;
    s.psnr = psnr(pred[i], gt[i], 1.0, luma_psnr);
    s.ssim = ssim(pred[i], gt[i]);
    s.synthesized = i % 2 == 1;
    report.frames.push_back(s);
  }
  return report;
}

Aggregate aggregate(const std::vector<ClipReport>& clips) {
  Aggregate a;
  std::vector<double> p_all, s_all, p_vfi, s_vfi, p_in, s_in;
  for (const auto& c : clips) {
    if (!c.error.empty()) continue;
    ++a.clips;
    for (const auto& f : c.frames) {
      p_all.push_back(f.psnr);
      s_all.push_back(f.ssim);
      (f.synthesized ? p_vfi : p_in).push_back(f.psnr);
      (f.synthesized ? s_vfi : s_in).push_back(f.ssim);
    }
  }
  a.psnr_avg = mean_of(p_all);
  a.ssim_avg = mean_of(s_all);
  a.psnr_vfi = mean_of(p_vfi);
  a.ssim_vfi = mean_of(s_vfi);
  a.psnr_input = mean_of(p_in);
  a.ssim_input = mean_of(s_in);
  return a;
}

std::map<std::string, std::string> read_tiers(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tiers file " + path.string());
  std::map<std::string, std::string> tiers;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string clip, tier;
    if (ss >> clip >> tier) tiers[clip] = tier;
  }
  return tiers;
}

EvalReport evaluate(const EvalOptions& o) {
  std::map<std::string, std::string> tiers;
  if (o.tiers) tiers = read_tiers(*o.tiers);
  else if (fs::exists(o.gt / "tiers.txt")) tiers = read_tiers(o.gt / "tiers.txt");

  EvalReport report;
  for (const auto& id : read_manifest(o.manifest)) {
    ClipReport clip;
    try {
      clip = score_clip(id, read_clip(clip_dir(o.pred, id), o.frames), read_clip(clip_dir(o.gt, id), o.frames),
                        o.luma_psnr);
    } catch (const std::exception& e) {
      clip.clip = id;
      clip.error = e.what();
    }
    if (const auto it = tiers.find(id); it != tiers.end()) clip.tier = it->second;
    report.clips.push_back(std::move(clip));
  }
  report.overall = aggregate(report.clips);
  std::map<std::string, std::vector<ClipReport>> by_tier;
  for (const auto& c : report.clips) by_tier[c.tier].push_back(c);
  for (const auto& [tier, clips] : by_tier) report.tiers[tier] = aggregate(clips);
  return report;
}

void write_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "clip,frame,psnr,ssim,set,tier\n";
  for (const auto& c : report.clips) {
    if (!c.error.empty()) {
      out << c.clip << ",,,,ERROR," << c.tier << "\n";
      continue;
    }
    for (const auto& f : c.frames)
      out << c.clip << ',' << f.frame << ',' << csv_number(f.psnr) << ',' << csv_number(f.ssim) << ','
          << (f.synthesized ? "VFI" : "AVG") << ',' << c.tier << "\n";
  }
}

void write_json(const fs::path& path, const EvalReport& report) {
  nlohmann::json j;
  j["overall"] = aggregate_json(report.overall);
  j["tiers"] = nlohmann::json::object();
  for (const auto& [tier, a] : report.tiers) j["tiers"][tier] = aggregate_json(a);
  j["clips"] = nlohmann::json::array();
  for (const auto& c : report.clips) {
    nlohmann::json cj;
    cj["clip"] = c.clip;
    cj["tier"] = c.tier;
    if (!c.error.empty()) cj["error"] = c.error;
    cj["frames"] = nlohmann::json::array();
    for (const auto& f : c.frames) {
      nlohmann::json fj;
      fj["frame"] = f.frame;
      psnr_json(fj, "psnr", f.psnr);
      fj["ssim"] = f.ssim;
      fj["set"] = f.synthesized ? "VFI" : "AVG";
      cj["frames"].push_back(fj);
    }
    j["clips"].push_back(cj);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_plot_data(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "tier,clips,psnr_avg,ssim_avg,psnr_vfi,ssim_vfi\n";
  auto row = [&](const std::string& name, const Aggregate& a) {
    out << name << ',' << a.clips << ',' << csv_number(a.psnr_avg) << ',' << csv_number(a.ssim_avg) << ','
        << csv_number(a.psnr_vfi) << ',' << csv_number(a.ssim_vfi) << "\n";
  };
  for (const auto& [tier, a] : report.tiers) row(tier, a);
  row("all", report.overall);
}

}  // namespace stvsr
