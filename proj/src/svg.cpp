/*
 * MVMSynth : synthesis and assessment of myocardial velocity mapping CMR
 *
 * Copyright 2026 MVMSynth Developers
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mvms/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mvms {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void write_line_chart(const std::filesystem::path& file, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<SvgSeries>& series) {
    constexpr double width = 640, height = 420;
    constexpr double ml = 64, mr = 150, mt = 40, mb = 48;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (!std::isfinite(xmin) || !std::isfinite(ymin))
        throw std::invalid_argument("write_line_chart: no data");
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << ml + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
         "font-family=\"sans-serif\">"
      << title << "</text>\n";

    // Axes and ticks.
    f << "<g stroke=\"#444\" stroke-width=\"1\">\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\"/>\n";
    f << "</g>\n<g font-size=\"11\" font-family=\"sans-serif\" fill=\"#333\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        f << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt(px(xv))
          << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#444\"/>\n";
        f << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << mt + ph + 16
          << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
        f << "<line x1=\"" << ml - 4 << "\" y1=\"" << fmt(py(yv)) << "\" x2=\"" << ml
          << "\" y2=\"" << fmt(py(yv)) << "\" stroke=\"#444\"/>\n";
        f << "<text x=\"" << ml - 7 << "\" y=\"" << fmt(py(yv) + 4)
          << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    }
    f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    f << "<text x=\"16\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">"
      << y_label << "</text>\n</g>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % 8];
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < series[s].x.size(); ++i) {
            if (i) f << " ";
            f << fmt(px(series[s].x[i])) << "," << fmt(py(series[s].y[i]));
        }
        f << "\"/>\n";
        const double ly = mt + 14 + 18 * double(s);
        f << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << fmt(ly) << "\" x2=\""
          << ml + pw + 34 << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
        f << "<text x=\"" << ml + pw + 40 << "\" y=\"" << fmt(ly + 4)
          << "\" font-size=\"11\" font-family=\"sans-serif\">" << series[s].label
          << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace mvms
