#include "mdmvar/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mdmvar/error.hpp"

namespace mdmvar {

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot open " + path.string() + " for writing");
    out << content;
    require(static_cast<bool>(out), "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

}  // namespace

std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<PlotSeries>& series, const std::vector<PlotNote>& notes) {
    constexpr double W = 640, H = 420, left = 70, right = 160, top = 40, bottom = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            xmin = std::min(xmin, s.x[k]);
            xmax = std::max(xmax, s.x[k]);
            ymin = std::min(ymin, s.y[k]);
            ymax = std::max(ymax, s.y[k]);
        }
    }
    for (const auto& n : notes) {
        ymin = std::min(ymin, n.y);
        ymax = std::max(ymax, n.y);
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double pw = W - left - right, ph = H - top - bottom;
    auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) { return top + (1 - (y - ymin) / (ymax - ymin)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4, yv = ymin + (ymax - ymin) * k / 4;
        o << "<text x=\"" << num(X(xv)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << tick(xv)
          << "</text>\n";
        o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(Y(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
          << "</text>\n";
    }
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">"
      << xml_escape(xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num(top + ph / 2) << ")\">" << xml_escape(ylabel) << "</text>\n";

    int legend = 0;
    for (const auto& s : series) {
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (s.markers) {
            for (std::size_t k = 0; k < n; ++k) {
                if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
                o << "<circle cx=\"" << num(X(s.x[k])) << "\" cy=\"" << num(Y(s.y[k])) << "\" r=\"2.5\" fill=\""
                  << s.color << "\"/>\n";
            }
        } else if (n > 0) {
            o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < n; ++k) {
                if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
                o << num(X(s.x[k])) << ',' << num(Y(s.y[k])) << ' ';
            }
            o << "\"/>\n";
        }
        const double ly = top + 10 + 16 * legend++;
        o << "<rect x=\"" << num(left + pw + 10) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
          << s.color << "\"/>\n";
        o << "<text x=\"" << num(left + pw + 25) << "\" y=\"" << num(ly) << "\">" << xml_escape(s.label) << "</text>\n";
    }
    for (const auto& n : notes) {
        o << "<line x1=\"" << num(X(n.x0)) << "\" y1=\"" << num(Y(n.y)) << "\" x2=\"" << num(X(n.x1)) << "\" y2=\""
          << num(Y(n.y)) << "\" stroke=\"#d62728\" stroke-dasharray=\"4 2\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << num(X(0.5 * (n.x0 + n.x1))) << "\" y=\"" << num(Y(n.y) - 5)
          << "\" text-anchor=\"middle\" fill=\"#d62728\">" << xml_escape(n.text) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, std::uint64_t seed,
                    const std::string& config_json) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = nlohmann::ordered_json::parse(config_json);
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

LossCurve read_loss_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == "step,loss,weight_mean",
            path.string() + ": expected header step,loss,weight_mean");
    LossCurve c;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, w;
        require(std::getline(row, a, ',') && std::getline(row, b, ',') && std::getline(row, w),
                path.string() + ":" + std::to_string(lineno) + ": expected three fields");
        try {
            std::size_t used = 0;
            c.step.push_back(std::stoi(a, &used));
            require(used == a.size(), "bad step");
            c.loss.push_back(std::stod(b, &used));
            require(used == b.size(), "bad loss");
            c.weight_mean.push_back(std::stod(w, &used));
            require(used == w.size(), "bad weight");
        } catch (const std::exception&) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return c;
}

}  // namespace mdmvar
