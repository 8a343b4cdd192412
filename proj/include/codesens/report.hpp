#pragma once

#include "csv.hpp"
#include "hash.hpp"
#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace codesens
{

inline std::string curve_csv(const std::vector<RatePoint>& points)
{
	std::string out = "rate,mean,ci_low,ci_high\n";
	for (const auto& p : points)
		out += csv::row({p.label, format_double(p.mean_similarity), format_double(p.ci_low), format_double(p.ci_high)});
	return out;
}

namespace detail
{
	inline std::string fixed2(double v)
	{
		char buf[32];
		std::snprintf(buf, sizeof buf, "%.2f", v);
		return buf;
	}

	inline std::string xml_escape(std::string_view s)
	{
		std::string out;
		for (char c : s) {
			switch (c) {
			case '&': out += "&amp;"; break;
			case '<': out += "&lt;"; break;
			case '>': out += "&gt;"; break;
			case '"': out += "&quot;"; break;
			default: out += c;
			}
		}
		return out;
	}
}

/// Static SVG line chart: mean similarity per point with the interval as a
/// shaded band. Numeric rates are placed on a [0, 1] axis; labeled points
/// (paraphrase levels) are spaced evenly.
inline std::string curve_svg(const std::vector<RatePoint>& points, std::string_view title)
{
	constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
	const double plot_w = width - left - right, plot_h = height - top - bottom;

	bool numeric = true;
	for (const auto& p : points)
		if (format_double(p.rate) != p.label)
			numeric = false;
	auto x_of = [&](std::size_t k) {
		if (numeric)
			return left + points[k].rate * plot_w;
		return points.size() == 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(k) / static_cast<double>(points.size() - 1);
	};
	auto y_of = [&](double v) { return top + (1.0 - std::clamp(v, 0.0, 1.0)) * plot_h; };
	using detail::fixed2;

	std::string s;
	s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
	s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
	s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + detail::xml_escape(title) + "</text>\n";
	// axes and gridlines
	s += "<g stroke=\"#999\" stroke-width=\"1\">\n";
	s += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(top + plot_h) + "\" x2=\"" + fixed2(left + plot_w) + "\" y2=\"" + fixed2(top + plot_h) + "\"/>\n";
	s += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(top) + "\" x2=\"" + fixed2(left) + "\" y2=\"" + fixed2(top + plot_h) + "\"/>\n";
	s += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
	for (int t = 0; t <= 5; ++t) {
		const double v = t / 5.0;
		s += "<text x=\"" + fixed2(left - 8) + "\" y=\"" + fixed2(y_of(v) + 4) + "\" text-anchor=\"end\">" + fixed2(v) + "</text>\n";
	}
	for (std::size_t k = 0; k < points.size(); ++k)
		s += "<text x=\"" + fixed2(x_of(k)) + "\" y=\"" + fixed2(top + plot_h + 18) + "\" text-anchor=\"middle\">" + detail::xml_escape(points[k].label) + "</text>\n";
	s += "<text x=\"" + fixed2(left + plot_w / 2) + "\" y=\"" + fixed2(height - 10) + "\" text-anchor=\"middle\">" + (numeric ? "augmentation rate" : "level")
		 + "</text>\n";
	s += "<text x=\"16\" y=\"" + fixed2(top + plot_h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fixed2(top + plot_h / 2) + ")\">TSED similarity</text>\n";
	s += "</g>\n";

	if (points.size() > 1) {
		std::string band;
		for (std::size_t k = 0; k < points.size(); ++k)
			band += fixed2(x_of(k)) + "," + fixed2(y_of(points[k].ci_high)) + " ";
		for (std::size_t k = points.size(); k-- > 0;)
			band += fixed2(x_of(k)) + "," + fixed2(y_of(points[k].ci_low)) + " ";
		band.pop_back();
		s += "<polygon points=\"" + band + "\" fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
		std::string line;
		for (std::size_t k = 0; k < points.size(); ++k)
			line += fixed2(x_of(k)) + "," + fixed2(y_of(points[k].mean_similarity)) + " ";
		line.pop_back();
		s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
	}
	for (std::size_t k = 0; k < points.size(); ++k) {
		if (points.size() == 1)
			s += "<line x1=\"" + fixed2(x_of(k)) + "\" y1=\"" + fixed2(y_of(points[k].ci_low)) + "\" x2=\"" + fixed2(x_of(k)) + "\" y2=\""
				 + fixed2(y_of(points[k].ci_high)) + "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
		s += "<circle cx=\"" + fixed2(x_of(k)) + "\" cy=\"" + fixed2(y_of(points[k].mean_similarity)) + "\" r=\"3.5\" fill=\"#1f77b4\"/>\n";
	}
	s += "</svg>\n";
	return s;
}

}
