#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "alphamaml/harness.hpp"

namespace alphamaml {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Panel {
  std::string title;
  double x0, y0, w, h;  // plot area in svg coordinates
};

void draw_series(std::ostream& os, const Panel& p, const std::vector<double>& xs,
                 const std::vector<double>& ys, const char* color) {
  if (xs.empty()) return;
  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    const double px = p.x0 + (xs[i] - xmin) / (xmax - xmin) * p.w;
    const double py = p.y0 + p.h - (ys[i] - ymin) / (ymax - ymin) * p.h;
    os << num(px) << ',' << num(py) << ' ';
  }
  os << "\"/>\n";
}

void panel_frame(std::ostream& os, const Panel& p, double ymin, double ymax) {
  os << "<rect x=\"" << num(p.x0) << "\" y=\"" << num(p.y0) << "\" width=\"" << num(p.w)
     << "\" height=\"" << num(p.h) << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"0.8\"/>\n";
  os << "<text x=\"" << num(p.x0) << "\" y=\"" << num(p.y0 - 6)
     << "\" font-size=\"12\" font-family=\"sans-serif\">" << p.title << "</text>\n";
  os << "<text x=\"" << num(p.x0 - 4) << "\" y=\"" << num(p.y0 + 10)
     << "\" font-size=\"9\" text-anchor=\"end\" font-family=\"sans-serif\">" << num(ymax)
     << "</text>\n";
  os << "<text x=\"" << num(p.x0 - 4) << "\" y=\"" << num(p.y0 + p.h)
     << "\" font-size=\"9\" text-anchor=\"end\" font-family=\"sans-serif\">" << num(ymin)
     << "</text>\n";
}

}  // namespace

void plot_traces(const std::vector<std::string>& trace_csvs, const std::string& out_svg) {
  if (trace_csvs.empty()) throw std::runtime_error("plot: no trace files given");
  struct Series {
    std::string name;
    std::vector<TraceRow> rows;
  };
  std::vector<Series> series;
  for (const auto& path : trace_csvs) {
    Series s;
    s.rows = read_trace_csv(path);
    auto slash = path.find_last_of('/');
    s.name = slash == std::string::npos ? path : path.substr(slash + 1);
    series.push_back(std::move(s));
  }

  const double width = 640, panel_h = 120, margin = 48, gap = 34;
  const double height = margin + 4 * (panel_h + gap);
  std::ofstream os(out_svg);
  if (!os) throw std::runtime_error("cannot create svg file: " + out_svg);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
     << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const char* titles[4] = {"learning rate alpha", "meta learning rate beta", "training loss",
                           "validation loss"};
  for (int panel = 0; panel < 4; ++panel) {
    Panel p{titles[panel], 70, margin + panel * (panel_h + gap), width - 110, panel_h};
    double ymin = 0.0, ymax = 1.0;
    bool have = false;
    auto extract = [&](const TraceRow& r) -> std::optional<double> {
      switch (panel) {
        case 0: return r.alpha;
        case 1: return r.beta;
        case 2: return r.train_loss;
        default: return r.val_loss;
      }
    };
    for (const auto& s : series)
      for (const auto& r : s.rows)
        if (auto v = extract(r)) {
          if (!have) {
            ymin = ymax = *v;
            have = true;
          }
          ymin = std::min(ymin, *v);
          ymax = std::max(ymax, *v);
        }
    panel_frame(os, p, ymin, have && ymax != ymin ? ymax : ymin + 1.0);
    for (size_t si = 0; si < series.size(); ++si) {
      std::vector<double> xs, ys;
      for (const auto& r : series[si].rows)
        if (auto v = extract(r)) {
          xs.push_back(static_cast<double>(r.iter));
          ys.push_back(*v);
        }
      draw_series(os, p, xs, ys, kSeriesColors[si % 8]);
    }
  }
  // legend
  for (size_t si = 0; si < series.size(); ++si) {
    const double y = 16 + 12 * static_cast<double>(si);
    os << "<rect x=\"70\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"3\" fill=\""
       << kSeriesColors[si % 8] << "\"/>\n";
    os << "<text x=\"86\" y=\"" << num(y - 3) << "\" font-size=\"10\" font-family=\"sans-serif\">"
       << series[si].name << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw std::runtime_error("failed writing svg file: " + out_svg);
}

namespace {

struct GridRow {
  double alpha0, beta0, ahl, bhl;
  long iters;  // kNotConverged when blank
};

std::vector<GridRow> read_grid_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open grid file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty grid file: " + path);
  if (line.rfind("alpha0,beta0,alpha_hyperlr,beta_hyperlr,iters_to_threshold,final_loss", 0) != 0)
    throw std::runtime_error(
        "grid schema mismatch in " + path +
        ": expected columns alpha0,beta0,alpha_hyperlr,beta_hyperlr,iters_to_threshold,"
        "final_loss,note");
  std::vector<GridRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    GridRow r{};
    std::getline(ss, f, ',');
    r.alpha0 = std::stod(f);
    std::getline(ss, f, ',');
    r.beta0 = std::stod(f);
    std::getline(ss, f, ',');
    r.ahl = std::stod(f);
    std::getline(ss, f, ',');
    r.bhl = std::stod(f);
    std::getline(ss, f, ',');
    r.iters = f == "NOT_CONVERGED" ? kNotConverged : std::stol(f);
    rows.push_back(r);
  }
  return rows;
}

std::string cell_color(long iters, long max_iters) {
  // light for fast convergence, dark for slow
  const double t = std::clamp(static_cast<double>(iters) / std::max(1L, max_iters), 0.0, 1.0);
  const int r = static_cast<int>(247 - t * 180);
  const int g = static_cast<int>(251 - t * 160);
  const int b = static_cast<int>(255 - t * 80);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void plot_heatmap(const std::string& grid_csv, const std::string& out_svg) {
  auto rows = read_grid_csv(grid_csv);
  if (rows.empty()) throw std::runtime_error("plot: grid file has no cells");

  std::set<double> a0s, b0s;
  std::set<std::pair<double, double>> hyper;
  long max_iters = 1;
  for (const auto& r : rows) {
    a0s.insert(r.alpha0);
    b0s.insert(r.beta0);
    hyper.insert({r.ahl, r.bhl});
    if (r.iters != kNotConverged) max_iters = std::max(max_iters, r.iters);
  }
  const bool hyper_axes = hyper.size() > 1;

  // panels: iterate (alpha0, beta0) pairs; inside each panel the cells
  // span the hyper-lr grid (or a single cell when hyper axes are flat)
  std::vector<std::pair<double, double>> panels;
  for (double a : a0s)
    for (double b : b0s) panels.push_back({a, b});

  std::set<double> ahls, bhls;
  for (const auto& h : hyper) {
    ahls.insert(h.first);
    bhls.insert(h.second);
  }
  const long cell = 46;
  const long nx = hyper_axes ? static_cast<long>(ahls.size()) : 1;
  const long ny = hyper_axes ? static_cast<long>(bhls.size()) : 1;
  const long panel_w = nx * cell + 70, panel_h = ny * cell + 58;
  const long cols = hyper_axes ? 2 : 1;
  const long rows_of_panels =
      hyper_axes ? (static_cast<long>(panels.size()) + cols - 1) / cols : 1;
  const double width =
      hyper_axes ? static_cast<double>(cols * panel_w + 20)
                 : static_cast<double>(static_cast<long>(b0s.size()) * cell + 110);
  const double height = hyper_axes
                            ? static_cast<double>(rows_of_panels * panel_h + 20)
                            : static_cast<double>(static_cast<long>(a0s.size()) * cell + 90);

  std::ofstream os(out_svg);
  if (!os) throw std::runtime_error("cannot create svg file: " + out_svg);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
     << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  auto draw_cell = [&](double x, double y, long iters) {
    if (iters == kNotConverged) {
      // blank cell = did not converge within the cap
      os << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"white\" stroke=\"#999\"/>\n";
      return;
    }
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << cell
       << "\" height=\"" << cell << "\" fill=\"" << cell_color(iters, max_iters)
       << "\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << num(x + cell / 2.0) << "\" y=\"" << num(y + cell / 2.0 + 4)
       << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" << iters
       << "</text>\n";
  };
  auto axis_label = [&](double x, double y, const std::string& text, const char* anchor) {
    os << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"10\" text-anchor=\""
       << anchor << "\" font-family=\"sans-serif\">" << text << "</text>\n";
  };

  if (!hyper_axes) {
    // single panel over (beta0 columns, alpha0 rows)
    axis_label(width / 2, 14, "iterations to threshold", "middle");
    long yi = 0;
    for (double a : a0s) {
      long xi = 0;
      for (double b : b0s) {
        long iters = kNotConverged;
        for (const auto& r : rows)
          if (r.alpha0 == a && r.beta0 == b) iters = r.iters;
        draw_cell(90 + xi * cell, 40 + yi * cell, iters);
        ++xi;
      }
      axis_label(84, 40 + yi * cell + cell / 2.0 + 4, "a0=" + num(a), "end");
      ++yi;
    }
    long xi = 0;
    for (double b : b0s) {
      axis_label(90 + xi * cell + cell / 2.0, 40 + static_cast<double>(a0s.size()) * cell + 14,
                 "b0=" + num(b), "middle");
      ++xi;
    }
  } else {
    long pi = 0;
    for (const auto& [a0, b0] : panels) {
      const double px = static_cast<double>(10 + (pi % cols) * panel_w);
      const double py = static_cast<double>(10 + (pi / cols) * panel_h);
      axis_label(px + 60 + nx * cell / 2.0, py + 12, "a0=" + num(a0) + " b0=" + num(b0), "middle");
      long yi = 0;
      for (double bh : bhls) {
        long xi = 0;
        for (double ah : ahls) {
          long iters = kNotConverged;
          bool found = false;
          for (const auto& r : rows)
            if (r.alpha0 == a0 && r.beta0 == b0 && r.ahl == ah && r.bhl == bh) {
              iters = r.iters;
              found = true;
            }
          if (found) draw_cell(px + 60 + xi * cell, py + 20 + yi * cell, iters);
          ++xi;
        }
        axis_label(px + 54, py + 20 + yi * cell + cell / 2.0 + 4, "bhl=" + num(bh), "end");
        ++yi;
      }
      long xi = 0;
      for (double ah : ahls) {
        axis_label(px + 60 + xi * cell + cell / 2.0, py + 20 + ny * cell + 14, "ahl=" + num(ah),
                   "middle");
        ++xi;
      }
      ++pi;
    }
  }
  os << "</svg>\n";
  if (!os) throw std::runtime_error("failed writing svg file: " + out_svg);
}

}  // namespace alphamaml
