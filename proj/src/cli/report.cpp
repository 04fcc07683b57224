#include "dap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dap::cli {

Aggregate aggregate(const std::vector<double>& values)
{
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

namespace {

std::string fmt(const char* spec, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string xml_escape(const std::string& s)
{
  std::string out;
  for (char ch : s) {
    switch (ch) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += ch;
    }
  }
  return out;
}

} // namespace

std::string loss_csv(const std::vector<double>& losses)
{
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + fmt("%.17g", losses[i]) + "\n";
  return out;
}

std::string loss_svg(const std::vector<double>& losses, const std::string& title)
{
  constexpr double W = 640, H = 400, left = 80, right = 20, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  const double n = static_cast<double>(std::max<std::size_t>(losses.size(), 2) - 1);
  double lo = 0.0, hi = 1.0;
  if (!losses.empty()) {
    lo = *std::min_element(losses.begin(), losses.end());
    hi = *std::max_element(losses.begin(), losses.end());
  }
  if (hi <= lo) {
    hi = lo + 1.0;
  }
  const auto x_of = [&](double it) { return left + pw * it / n; };
  const auto y_of = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + xml_escape(title) +
       "</text>\n";
  s += "<g stroke=\"black\" stroke-width=\"1\">\n";
  s += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + fmt("%.2f", top + ph) + "\" x2=\"" + fmt("%.2f", left + pw) +
       "\" y2=\"" + fmt("%.2f", top + ph) + "\"/>\n";
  s += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + fmt("%.2f", top) + "\" x2=\"" + fmt("%.2f", left) + "\" y2=\"" +
       fmt("%.2f", top + ph) + "\"/>\n";
  s += "</g>\n";

  // x ticks at 1, 10, 100, ... up to the iteration count
  s += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double t = 1.0; t <= n; t *= 10.0) {
    const std::string x = fmt("%.2f", x_of(t));
    s += "<line x1=\"" + x + "\" y1=\"" + fmt("%.2f", top + ph) + "\" x2=\"" + x + "\" y2=\"" + fmt("%.2f", top + ph + 5) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + x + "\" y=\"" + fmt("%.2f", top + ph + 18) + "\" text-anchor=\"middle\">" + fmt("%.0f", t) +
         "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const std::string y = fmt("%.2f", y_of(v));
    s += "<line x1=\"" + fmt("%.2f", left - 5) + "\" y1=\"" + y + "\" x2=\"" + fmt("%.2f", left) + "\" y2=\"" + y +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt("%.2f", left - 8) + "\" y=\"" + y + "\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
         fmt("%.3g", v) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.2f", left + pw / 2) + "\" y=\"" + fmt("%.2f", H - 15) +
       "\" text-anchor=\"middle\">iteration</text>\n";
  s += "<text x=\"18\" y=\"" + fmt("%.2f", top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt("%.2f", top + ph / 2) + ")\">loss</text>\n";
  s += "</g>\n";

  s += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (i) s += ' ';
    s += fmt("%.2f", x_of(static_cast<double>(i))) + "," + fmt("%.2f", y_of(losses[i]));
  }
  s += "\"/>\n</svg>\n";
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("io", "cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("io", "write failed: " + path.string());
}

json error_document(const std::string& kind, const std::string& message)
{
  return json{{"error", {{"kind", kind}, {"message", message}}}};
}

} // namespace dap::cli
