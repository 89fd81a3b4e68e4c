#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cloak/evaluation/evaluation.hpp"

namespace cloak::evaluation {
namespace {

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create report directory " + dir.string());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

Report to_report(const DigitalReport& digital, const std::string& label) {
  Report r;
  double undetected = 0.0;
  for (std::size_t i = 0; i < digital.repetitions.size(); ++i) {
    const auto& rep = digital.repetitions[i];
    char name[32];
    std::snprintf(name, sizeof name, "/rep_%02zu", i);
    r.rows.push_back({label + name, rep.outcome.n_all, static_cast<double>(rep.outcome.n_undetected), rep.rs_percent});
    undetected += rep.outcome.n_undetected;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, digital.repetitions.size()));
  r.rows.push_back({label + "/mean", digital.baseline_detected, undetected / n, digital.mean_rs});
  r.rows.push_back({label + "/min", digital.baseline_detected, digital.min_rs * digital.baseline_detected / 100.0,
                    digital.min_rs});
  r.rows.push_back({label + "/max", digital.baseline_detected, digital.max_rs * digital.baseline_detected / 100.0,
                    digital.max_rs});
  return r;
}

Report to_report(const std::vector<ConditionResult>& photos) {
  Report r;
  for (const auto& c : photos) {
    r.rows.push_back({c.key.label(), c.n_all, static_cast<double>(c.n_undetected), c.rs_percent});
  }
  return r;
}

Report to_report(const std::vector<SweepRow>& rows) {
  Report r;
  r.sweep = rows;
  Plot plot{"sweep_rs", "Attack success rate per sweep entry", "entry rank", "R_s (%)", {}};
  Series mean{"mean", {}, {}}, lo{"min", {}, {}}, hi{"max", {}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.error.empty()) continue;
    r.rows.push_back({"sweep/" + row.name, row.n_all, row.mean_undetected, row.mean_rs});
    for (Series* s : {&mean, &lo, &hi}) s->x.push_back(static_cast<double>(i + 1));
    mean.y.push_back(row.mean_rs);
    lo.y.push_back(row.min_rs);
    hi.y.push_back(row.max_rs);
  }
  plot.series = {mean, lo, hi};
  if (!mean.x.empty()) r.plots.push_back(std::move(plot));
  return r;
}

Plot loss_plot(const std::vector<trainer::EpochRecord>& history) {
  Plot plot{"training_loss", "Epoch-mean training loss", "epoch", "loss", {}};
  Series total{"total", {}, {}}, det{"detection", {}, {}}, tv{"tv", {}, {}}, nps{"nps", {}, {}};
  Series dis{"disappear", {}, {}};
  bool any_disappear = false;
  for (const auto& r : history) {
    for (Series* s : {&total, &det, &tv, &nps, &dis}) s->x.push_back(r.epoch);
    total.y.push_back(r.mean.total);
    det.y.push_back(r.mean.detection);
    tv.y.push_back(r.mean.tv);
    nps.y.push_back(r.mean.nps);
    dis.y.push_back(r.mean.disappear);
    any_disappear = any_disappear || r.mean.disappear != 0.0;
  }
  plot.series = {total, det, tv, nps};
  if (any_disappear) plot.series.push_back(dis);
  return plot;
}

void render_plot(const Plot& plot, const std::filesystem::path& path) {
  const int width = 720, height = 460;
  const int left = 70, right = 150, top = 40, bottom = 50;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const int pw = width - left - right, ph = height - top - bottom;
  const auto px = [&](double x) { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)); };
  const auto py = [&](double y) { return top + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)); };

  const cv::Scalar ink(40, 40, 40), grid(225, 225, 225);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5.0, yv = y0 + (y1 - y0) * t / 5.0;
    cv::line(img, {px(xv), top}, {px(xv), top + ph}, grid);
    cv::line(img, {left, py(yv)}, {left + pw, py(yv)}, grid);
    cv::putText(img, number(std::round(xv * 100) / 100), {px(xv) - 12, top + ph + 18}, font, 0.4, ink);
    cv::putText(img, number(std::round(yv * 1000) / 1000), {4, py(yv) + 4}, font, 0.4, ink);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, ink);
  cv::putText(img, plot.title, {left, 24}, font, 0.55, ink, 1, cv::LINE_AA);
  cv::putText(img, plot.x_label, {left + pw / 2 - 20, height - 10}, font, 0.45, ink, 1, cv::LINE_AA);
  cv::putText(img, plot.y_label, {4, top - 8}, font, 0.45, ink, 1, cv::LINE_AA);

  static const cv::Scalar palette[] = {{180, 90, 30}, {40, 40, 200}, {40, 150, 40}, {160, 60, 160}, {20, 140, 220}, {90, 90, 90}};
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const cv::Scalar color = palette[k % std::size(palette)];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.emplace_back(px(s.x[i]), py(s.y[i]));
    }
    if (pts.size() == 1) cv::circle(img, pts[0], 3, color, cv::FILLED);
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const int ly = top + 10 + 20 * static_cast<int>(k);
    cv::line(img, {left + pw + 12, ly}, {left + pw + 36, ly}, color, 2);
    cv::putText(img, s.name, {left + pw + 42, ly + 4}, font, 0.45, ink, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write plot " + path.string());
}

void emit_report(const Report& report, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  {
    auto out = open_out(out_dir / "report.csv");
    out << "condition,n_all,n_undetected,rs_percent\n";
    for (const auto& r : report.rows) {
      out << csv_field(r.condition) << ',' << r.n_all << ',' << number(r.n_undetected) << ',' << number(r.rs_percent)
          << '\n';
    }
  }
  if (!report.sweep.empty()) {
    auto out = open_out(out_dir / "sweep.csv");
    out << "rank,name,color_tag,shape_tag,n_all,mean_rs,min_rs,max_rs,class_histogram,error\n";
    for (std::size_t i = 0; i < report.sweep.size(); ++i) {
      const auto& r = report.sweep[i];
      std::string hist;
      for (std::size_t k = 0; k < r.class_histogram.size(); ++k) hist += (k ? " " : "") + std::to_string(r.class_histogram[k]);
      out << i + 1 << ',' << csv_field(r.name) << ',' << csv_field(r.color_tag) << ',' << csv_field(r.shape_tag) << ','
          << r.n_all << ',' << number(r.mean_rs) << ',' << number(r.min_rs) << ',' << number(r.max_rs) << ',' << hist
          << ',' << csv_field(r.error) << '\n';
    }
  }

  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"condition", r.condition}, {"n_all", r.n_all}, {"n_undetected", r.n_undetected},
                         {"rs_percent", r.rs_percent}});
  }
  j["sweep"] = nlohmann::json::array();
  for (const auto& r : report.sweep) {
    j["sweep"].push_back({{"name", r.name}, {"color_tag", r.color_tag}, {"shape_tag", r.shape_tag},
                          {"n_all", r.n_all}, {"mean_undetected", r.mean_undetected}, {"mean_rs", r.mean_rs},
                          {"min_rs", r.min_rs}, {"max_rs", r.max_rs}, {"class_histogram", r.class_histogram},
                          {"error", r.error}});
  }
  j["plots"] = nlohmann::json::array();
  for (const auto& p : report.plots) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : p.series) series.push_back({{"name", s.name}, {"x", s.x}, {"y", s.y}});
    j["plots"].push_back({{"name", p.name}, {"title", p.title}, {"x_label", p.x_label}, {"y_label", p.y_label},
                          {"series", series}});
  }
  {
    auto out = open_out(out_dir / "report.json");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + (out_dir / "report.json").string());
  }
  for (const auto& p : report.plots) render_plot(p, out_dir / (p.name + ".png"));
}

Report read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    Report r;
    for (const auto& e : j.at("rows")) {
      r.rows.push_back({e.at("condition"), e.at("n_all"), e.at("n_undetected"), e.at("rs_percent")});
    }
    for (const auto& e : j.at("sweep")) {
      SweepRow s;
      s.name = e.at("name");
      s.color_tag = e.at("color_tag");
      s.shape_tag = e.at("shape_tag");
      s.n_all = e.at("n_all");
      s.mean_undetected = e.at("mean_undetected");
      s.mean_rs = e.at("mean_rs");
      s.min_rs = e.at("min_rs");
      s.max_rs = e.at("max_rs");
      s.class_histogram = e.at("class_histogram").get<std::vector<int>>();
      s.error = e.at("error");
      r.sweep.push_back(std::move(s));
    }
    for (const auto& e : j.at("plots")) {
      Plot p{e.at("name"), e.at("title"), e.at("x_label"), e.at("y_label"), {}};
      for (const auto& s : e.at("series")) {
        p.series.push_back({s.at("name"), s.at("x").get<std::vector<double>>(), s.at("y").get<std::vector<double>>()});
      }
      r.plots.push_back(std::move(p));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed report " + path.string() + ": " + e.what());
  }
}

}  // namespace cloak::evaluation
