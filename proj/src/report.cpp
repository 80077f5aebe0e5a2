#include "retreg/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "retreg/error.hpp"
#include "retreg/warp.hpp"

namespace retreg {

namespace {

std::string fmt(double v, int decimals = 6) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

bool same_configuration(const RegistrationResult& r, const std::vector<Step>& c) { return r.configuration == c; }

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

// Plot frame shared by both chart kinds: 480x400 with a 60 px margin.
struct Frame {
  double x0 = 60, y0 = 340, w = 380, h = 300;
  double lo = 0.0, hi = 1.0;
  double px(double v) const { return x0 + w * (v - lo) / (hi - lo); }
  double py(double v) const { return y0 - h * (v - lo) / (hi - lo); }
};

void frame_open(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, bool y_unit) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"400\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n";
  os << "<rect width=\"480\" height=\"400\" fill=\"white\"/>\n";
  os << "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-size=\"13\">" << svg_escape(title) << "</text>\n";
  os << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 - f.h << "\" width=\"" << f.w << "\" height=\"" << f.h
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = f.lo + (f.hi - f.lo) * k / 4.0;
    const double yv = y_unit ? k / 4.0 : v;
    const double yp = f.y0 - f.h * k / 4.0;
    os << "<text x=\"" << f.px(v) << "\" y=\"" << f.y0 + 16 << "\" text-anchor=\"middle\">" << fmt(v, 2)
       << "</text>\n";
    os << "<text x=\"" << f.x0 - 6 << "\" y=\"" << yp + 4 << "\" text-anchor=\"end\">" << fmt(yv, 2) << "</text>\n";
  }
  os << "<text x=\"" << f.x0 + f.w / 2 << "\" y=\"" << f.y0 + 36 << "\" text-anchor=\"middle\">"
     << svg_escape(xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << f.y0 - f.h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << svg_escape(ylabel) << "</text>\n";
}

Image stretched(const Image& img) {
  const auto d = img.data();
  if (d.empty()) return img;
  const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) return Image(img.width(), img.height(), 0.5);
  return scaled(img, 1.0 / range, -*mn / range);
}

}  // namespace

CohortStats cohort_stats(const std::vector<RegistrationResult>& results, const std::vector<Step>& configuration,
                         Cohort cohort) {
  CohortStats s;
  std::vector<double> v;
  for (const auto& r : results) {
    if (r.cohort != cohort || !same_configuration(r, configuration)) continue;
    if (r.hard_failure()) {
      ++s.failed;
      continue;
    }
    v.push_back(r.final_score.value);
  }
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  s.mean = mean;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::vector<std::pair<double, double>> step_points(const std::vector<RegistrationResult>& results,
                                                   const std::vector<Step>& configuration, Step step, Cohort cohort) {
  std::vector<std::pair<double, double>> pts;
  const std::string name(to_string(step));
  for (const auto& r : results) {
    if (r.cohort != cohort || !same_configuration(r, configuration) || r.hard_failure()) continue;
    for (const auto& s : r.steps)
      if (s.name == name) pts.emplace_back(s.before, s.score.value);
  }
  return pts;
}

double mean_improvement_percent(const std::vector<std::pair<double, double>>& points) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [before, after] : points) sum += (after - before) / std::max(before, 1e-6);
  return 100.0 * sum / static_cast<double>(points.size());
}

std::string summary_csv(const std::vector<RegistrationResult>& results,
                        const std::vector<std::vector<Step>>& configurations) {
  std::ostringstream os;
  os << "configuration,fbr,at,ffd,cohort,count,failed,mean_ve_ncc,std_ve_ncc\n";
  for (const auto& c : configurations) {
    const auto has = [&c](Step s) { return std::find(c.begin(), c.end(), s) != c.end() ? 1 : 0; };
    for (Cohort cohort : kAllCohorts) {
      const CohortStats s = cohort_stats(results, c, cohort);
      os << configuration_name(c) << ',' << has(Step::Fbr) << ',' << has(Step::At) << ',' << has(Step::Ffd) << ','
         << to_string(cohort) << ',' << s.count << ',' << s.failed << ',' << (s.mean ? fmt(*s.mean) : "") << ','
         << (s.stddev ? fmt(*s.stddev) : "") << '\n';
    }
  }
  return os.str();
}

std::string pairs_csv(const std::vector<RegistrationResult>& results) {
  std::ostringstream os;
  os << "pair_id,cohort,configuration,status,step_index,step,transform,ve_ncc,overlap,before,accepted,wall_time_s\n";
  for (const auto& r : results) {
    const std::string head = r.pair_id + "," + std::string(to_string(r.cohort)) + "," +
                             configuration_name(r.configuration) + "," + std::string(to_string(r.status)) + ",";
    if (r.hard_failure()) {
      os << head << "0,,,,,,,\n";
      continue;
    }
    if (r.steps.empty()) {
      os << head << "0,none,affine," << fmt(r.initial.value) << ',' << fmt(r.initial.overlap_fraction, 4) << ','
         << fmt(r.initial.value) << ",1,0.000\n";
      continue;
    }
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      const auto& s = r.steps[i];
      os << head << i + 1 << ',' << s.name << ',' << kind_name(s.transform) << ',' << fmt(s.score.value) << ','
         << fmt(s.score.overlap_fraction, 4) << ',' << fmt(s.before) << ',' << (s.accepted ? 1 : 0) << ','
         << fmt(s.wall_time, 3) << '\n';
    }
  }
  return os.str();
}

std::string cdf_svg(const std::string& title, const std::vector<CdfSeries>& series) {
  Frame f;
  std::ostringstream os;
  frame_open(os, f, title, "VE-NCC", "fraction of pairs", true);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<double> v = series[k].values;
    std::sort(v.begin(), v.end());
    const char* colour = kPalette[k % std::size(kPalette)];
    if (!v.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      double level = 0.0;
      os << f.px(std::clamp(v.front(), 0.0, 1.0)) << ',' << f.y0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = f.px(std::clamp(v[i], 0.0, 1.0));
        os << ' ' << x << ',' << f.y0 - f.h * level;
        level = static_cast<double>(i + 1) / static_cast<double>(v.size());
        os << ' ' << x << ',' << f.y0 - f.h * level;
      }
      os << ' ' << f.px(1.0) << ',' << f.y0 - f.h << "\"/>\n";
    }
    const double ly = 50 + 14.0 * static_cast<double>(k);
    os << "<line x1=\"" << f.x0 + 10 << "\" y1=\"" << ly << "\" x2=\"" << f.x0 + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << f.x0 + 36 << "\" y=\"" << ly + 4 << "\">" << svg_escape(series[k].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string scatter_svg(const std::string& title, const std::vector<std::pair<double, double>>& points) {
  Frame f;
  std::ostringstream os;
  frame_open(os, f, title, "VE-NCC before", "VE-NCC after", false);
  os << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(1) << "\" y2=\"" << f.py(1)
     << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  std::size_t above = 0;
  for (const auto& [b, a] : points) {
    if (a >= b) ++above;
    os << "<circle cx=\"" << f.px(std::clamp(b, 0.0, 1.0)) << "\" cy=\"" << f.py(std::clamp(a, 0.0, 1.0))
       << "\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
  }
  os << "<text x=\"" << f.x0 + 10 << "\" y=\"56\">improvement " << fmt(mean_improvement_percent(points), 1)
     << "% (n=" << points.size() << ", on or above diagonal " << above << ")</text>\n";
  os << "</svg>\n";
  return os.str();
}

Image checkerboard(const Image& fixed, const Image& moving, const Transform& tf, int tiles) {
  if (tiles < 1) throw InvalidArgument("checkerboard needs at least one tile");
  const WarpResult w = warp(moving, tf, fixed.width(), fixed.height());
  const Image a = stretched(fixed);
  const Image b = stretched(w.image);
  Image out(fixed.width(), fixed.height());
  for (int y = 0; y < fixed.height(); ++y)
    for (int x = 0; x < fixed.width(); ++x) {
      const int tx = x * tiles / fixed.width(), ty = y * tiles / fixed.height();
      const std::size_t i = static_cast<std::size_t>(y) * fixed.width() + x;
      const bool use_moving = ((tx + ty) % 2 == 1) && w.mask[i];
      out(x, y) = use_moving ? b(x, y) : a(x, y);
    }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

void write_report(const std::vector<RegistrationResult>& results,
                  const std::vector<std::vector<Step>>& configurations, const std::filesystem::path& out_dir) {
  write_text(out_dir / "summary.csv", summary_csv(results, configurations));
  write_text(out_dir / "pairs.csv", pairs_csv(results));
  for (Cohort cohort : kAllCohorts) {
    const auto present = std::any_of(results.begin(), results.end(),
                                     [cohort](const RegistrationResult& r) { return r.cohort == cohort; });
    if (!present) continue;
    const std::string cname(to_string(cohort));
    std::vector<CdfSeries> series;
    for (const auto& c : configurations) {
      CdfSeries s{configuration_name(c), {}};
      for (const auto& r : results)
        if (r.cohort == cohort && same_configuration(r, c) && !r.hard_failure()) s.values.push_back(r.final_score.value);
      series.push_back(std::move(s));
    }
    write_text(out_dir / ("cdf_" + cname + ".svg"), cdf_svg("Cumulative VE-NCC, " + cname, series));

    // Per-step scatter for the longest configuration that was run.
    const auto longest = std::max_element(configurations.begin(), configurations.end(),
                                          [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (longest == configurations.end()) continue;
    for (Step step : *longest) {
      const std::string sname(to_string(step));
      const auto pts = step_points(results, *longest, step, cohort);
      write_text(out_dir / ("scatter_" + sname + "_" + cname + ".svg"),
                 scatter_svg(sname + " step, " + cname + " (" + configuration_name(*longest) + ")", pts));
    }
  }
}

}  // namespace retreg
