#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "errors.hpp"

namespace sitadda {

inline constexpr int kSummarySchemaVersion = 1;

/// JSON has no infinity or NaN; they are written as strings.
inline nlohmann::json json_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os) throw DataError("failed writing '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    write_text(path, j.dump(2) + "\n");
}

inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Minimal CSV table with a fixed header.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row)
    {
        if (row.size() != header_.size()) throw ShapeError("csv row width does not match header");
        rows_.push_back(std::move(row));
    }

    [[nodiscard]] std::string str() const
    {
        std::ostringstream os;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_escape(r[i]);
            os << '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return os.str();
    }

    void save(const std::filesystem::path& path) const { write_text(path, str()); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const StepRecord& r)
{
    return {{"step", r.step}, {"disc_loss", json_number(r.disc_loss)}, {"gen_loss", json_number(r.gen_loss)}};
}

inline nlohmann::json to_json(const EpochRecord& r)
{
    return {{"epoch", r.epoch},
            {"train_loss", json_number(r.train_loss)},
            {"val_pearson", json_number(r.val_pearson)},
            {"lr", r.lr}};
}

inline nlohmann::json to_json(const AdaptConfig& c)
{
    return {{"schedule", to_string(c.schedule)},
            {"disc_lr", c.disc_lr},
            {"gen_lr", c.gen_lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epochs", c.epochs},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"discriminator",
             {{"num_layers", c.discriminator.num_layers},
              {"base_channels", c.discriminator.base_channels},
              {"channel_cap", c.discriminator.channel_cap},
              {"norm", nn::to_string(c.discriminator.norm)}}},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const SourceTrainConfig& c)
{
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"decay_start_epoch", c.decay.start_epoch},
            {"decay_final_factor", c.decay.final_factor},
            {"checkpoint_metric", "val_pearson"},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const GeneratorConfig& c)
{
    return {{"depth", c.depth},
            {"base_channels", c.base_channels},
            {"channel_cap", c.channel_cap},
            {"norm", nn::to_string(c.norm)},
            {"norm_input_block", c.norm_input_block},
            {"norm_bottleneck", c.norm_bottleneck}};
}

inline nlohmann::json manifest_base(const std::string& command, std::uint64_t seed)
{
    return {{"schema_version", kSummarySchemaVersion}, {"command", command}, {"seed", seed}};
}

// ---------------------------------------------------------------------------
// SVG line plots
// ---------------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotReference {
    std::string name;
    double y = 0.0;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::vector<std::string> x_tick_labels; // optional labels at x = 0, 1, ...
};

inline std::string svg_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string svg_line_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series,
                                 const std::vector<PlotReference>& refs = {})
{
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    const double W = 640, H = 420, ml = 70, mr = 160, mt = 40, mb = 60;
    auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    for (const auto& r : refs)
        if (std::isfinite(r.y)) {
            ymin = std::min(ymin, r.y);
            ymax = std::max(ymax, r.y);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double v) { return mt + (ymax - v) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << svg_escape(spec.title) << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = ymin + (ymax - ymin) * t / 4.0;
        os << "<text x=\"" << ml - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << format_number(std::round(v * 1000) / 1000) << "</text>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << py(v) << "\" x2=\"" << W - mr << "\" y2=\"" << py(v) << "\" stroke=\"#ddd\"/>\n";
    }
    if (!spec.x_tick_labels.empty()) {
        for (std::size_t i = 0; i < spec.x_tick_labels.size(); ++i)
            os << "<text x=\"" << px(static_cast<double>(i)) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << svg_escape(spec.x_tick_labels[i]) << "</text>\n";
    } else {
        for (int t = 0; t <= 4; ++t) {
            const double v = xmin + (xmax - xmin) * t / 4.0;
            const double shown = spec.log_x ? std::pow(10.0, v) : v;
            os << "<text x=\"" << ml + (W - ml - mr) * t / 4.0 << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << format_number(shown) << "</text>\n";
        }
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << svg_escape(spec.x_label) << "</text>\n";
    os << "<text transform=\"translate(18," << (mt + H - mb) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << svg_escape(spec.y_label) << "</text>\n";

    int legend = 0;
    auto legend_entry = [&](const std::string& name, const char* colour, bool dashed) {
        const double ly = mt + 16.0 * legend++;
        os << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 30 << "\" y2=\"" << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
        os << "<text x=\"" << W - mr + 35 << "\" y=\"" << ly + 4 << "\">" << svg_escape(name) << "</text>\n";
    };
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (!std::isfinite(refs[i].y)) continue;
        os << "<line x1=\"" << ml << "\" y1=\"" << py(refs[i].y) << "\" x2=\"" << W - mr << "\" y2=\"" << py(refs[i].y) << "\" stroke=\"#555\" stroke-dasharray=\"5,3\"/>\n";
        legend_entry(refs[i].name, "#555", true);
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* colour = palette[s % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (!std::isfinite(series[s].y[i])) continue;
            points += format_number(px(series[s].x[i])) + "," + format_number(py(series[s].y[i])) + " ";
            os << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i]) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
        legend_entry(series[s].name, colour, false);
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace sitadda
