#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazards.hpp"

namespace mixhaz {

// One unemployment spell: notice-length category, observed duration bin
// (right-censored if censored == 1), and covariates.
struct DurationRecord {
	std::int64_t id = 0;
	int notice = 0;
	int duration = 1;
	bool censored = false;
	std::vector<double> x;
};

struct Panel {
	std::vector<std::string> notice_labels;    // category index -> label
	std::vector<std::string> covariate_names;  // without the x_ prefix
	std::vector<DurationRecord> rows;

	std::vector<int> notice() const {
		std::vector<int> v(rows.size());
		for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].notice;
		return v;
	}
	std::vector<int> duration() const {
		std::vector<int> v(rows.size());
		for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].duration;
		return v;
	}
	std::vector<char> censored() const {
		std::vector<char> v(rows.size());
		for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].censored ? 1 : 0;
		return v;
	}
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
	std::vector<std::string> out;
	std::string field;
	for (char c : line) {
		if (c == ',') {
			out.push_back(field);
			field.clear();
		} else if (c != '\r') {
			field += c;
		}
	}
	out.push_back(field);
	return out;
}

inline std::string trim(const std::string& s) {
	std::size_t b = s.find_first_not_of(" \t");
	if (b == std::string::npos) return "";
	std::size_t e = s.find_last_not_of(" \t");
	return s.substr(b, e - b + 1);
}

[[noreturn]] inline void schema_error(std::size_t row, std::size_t col, const std::string& what) {
	throw std::invalid_argument("schema violation at row " + std::to_string(row) + ", column " +
	                            std::to_string(col) + ": " + what);
}

}  // namespace detail

// Read spell records from CSV with header id,notice,duration,censored,x_...
// Notice labels map to category indices; if notice_levels is empty the
// mapping follows first appearance, otherwise it must list every label.
// Durations may be rebinned with bin_weeks > 0: bin = ceil(weeks/bin_weeks),
// with week 0 mapped to bin 1.
inline Panel read_panel_csv(std::istream& in, const std::vector<std::string>& notice_levels = {},
                            int bin_weeks = 0) {
	Panel panel;
	panel.notice_labels = notice_levels;
	std::string line;
	if (!std::getline(in, line)) throw std::invalid_argument("schema violation: empty input");
	const auto header = detail::split_csv_line(line);
	const std::vector<std::string> required{"id", "notice", "duration", "censored"};
	for (std::size_t c = 0; c < required.size(); ++c) {
		if (c >= header.size() || detail::trim(header[c]) != required[c])
			detail::schema_error(1, c + 1, "expected header field '" + required[c] + "'");
	}
	for (std::size_t c = required.size(); c < header.size(); ++c) {
		const std::string name = detail::trim(header[c]);
		if (name.rfind("x_", 0) != 0)
			detail::schema_error(1, c + 1, "covariate columns must be named x_<name>, got '" + name + "'");
		panel.covariate_names.push_back(name.substr(2));
	}
	const std::size_t ncol = header.size();
	std::size_t row = 1;
	while (std::getline(in, line)) {
		++row;
		if (detail::trim(line).empty()) continue;
		const auto fields = detail::split_csv_line(line);
		if (fields.size() != ncol)
			detail::schema_error(row, fields.size(), "expected " + std::to_string(ncol) + " fields, got " +
			                                             std::to_string(fields.size()));
		DurationRecord rec;
		try {
			rec.id = std::stoll(detail::trim(fields[0]));
		} catch (const std::exception&) {
			detail::schema_error(row, 1, "id must be an integer, got '" + fields[0] + "'");
		}
		const std::string label = detail::trim(fields[1]);
		if (label.empty()) detail::schema_error(row, 2, "empty notice label");
		int idx = -1;
		for (std::size_t j = 0; j < panel.notice_labels.size(); ++j)
			if (panel.notice_labels[j] == label) idx = static_cast<int>(j);
		if (idx < 0) {
			if (!notice_levels.empty())
				detail::schema_error(row, 2, "notice label '" + label + "' not in configured levels");
			panel.notice_labels.push_back(label);
			idx = static_cast<int>(panel.notice_labels.size()) - 1;
		}
		rec.notice = idx;
		long dur = 0;
		try {
			dur = std::stol(detail::trim(fields[2]));
		} catch (const std::exception&) {
			detail::schema_error(row, 3, "duration must be an integer, got '" + fields[2] + "'");
		}
		if (bin_weeks > 0) {
			if (dur < 0) detail::schema_error(row, 3, "week count must be non-negative");
			dur = (dur + bin_weeks - 1) / bin_weeks;
			if (dur < 1) dur = 1;
		} else if (dur < 1) {
			detail::schema_error(row, 3, "duration must be a positive bin index");
		}
		rec.duration = static_cast<int>(dur);
		const std::string cen = detail::trim(fields[3]);
		if (cen == "0")
			rec.censored = false;
		else if (cen == "1")
			rec.censored = true;
		else
			detail::schema_error(row, 4, "censored must be 0 or 1, got '" + fields[3] + "'");
		rec.x.reserve(panel.covariate_names.size());
		for (std::size_t c = 4; c < ncol; ++c) {
			try {
				std::size_t pos = 0;
				const std::string f = detail::trim(fields[c]);
				double v = std::stod(f, &pos);
				if (pos != f.size()) throw std::invalid_argument("trailing characters");
				rec.x.push_back(v);
			} catch (const std::exception&) {
				detail::schema_error(row, c + 1, "covariate must be numeric, got '" + fields[c] + "'");
			}
		}
		panel.rows.push_back(std::move(rec));
	}
	return panel;
}

inline Panel read_panel_csv_file(const std::string& path,
                                 const std::vector<std::string>& notice_levels = {},
                                 int bin_weeks = 0) {
	std::ifstream in(path);
	if (!in) throw std::invalid_argument("cannot open input file: " + path);
	return read_panel_csv(in, notice_levels, bin_weeks);
}

// %.17g round-trips doubles exactly and keeps output byte-stable for a build
inline std::string format_double(double v) {
	char buf[40];
	std::snprintf(buf, sizeof(buf), "%.17g", v);
	return buf;
}

// Aggregated exit-rate input: header notice,d,numerator,denominator.  Notice
// categories are indexed in order of first appearance; d must cover 1..dbar
// for every group (cells may carry zero denominator = not estimable).
inline ExitRateTable read_exit_rate_csv(std::istream& in,
                                        std::vector<std::string>* labels_out = nullptr) {
	std::string line;
	if (!std::getline(in, line)) throw std::invalid_argument("empty exit-rate file");
	auto header = detail::split_csv_line(line);
	const std::vector<std::string> want = {"notice", "d", "numerator", "denominator"};
	if (header.size() != want.size())
		detail::schema_error(1, 1, "expected header notice,d,numerator,denominator");
	for (std::size_t c = 0; c < want.size(); ++c)
		if (header[c] != want[c])
			detail::schema_error(1, c + 1, "expected column '" + want[c] + "', got '" + header[c] + "'");

	std::vector<std::string> labels;
	struct Cell {
		int group, d;
		double num, den;
	};
	std::vector<Cell> cells;
	int dmax = 0;
	for (std::size_t row = 2; std::getline(in, line); ++row) {
		if (line.empty() || line == "\r") continue;
		auto fields = detail::split_csv_line(line);
		if (fields.size() != 4) detail::schema_error(row, 1, "expected 4 fields");
		Cell cell;
		cell.group = -1;
		for (std::size_t g = 0; g < labels.size(); ++g)
			if (labels[g] == fields[0]) cell.group = static_cast<int>(g);
		if (cell.group < 0) {
			cell.group = static_cast<int>(labels.size());
			labels.push_back(fields[0]);
		}
		try {
			cell.d = std::stoi(fields[1]);
			cell.num = std::stod(fields[2]);
			cell.den = std::stod(fields[3]);
		} catch (const std::exception&) {
			detail::schema_error(row, 2, "d, numerator, denominator must be numeric");
		}
		if (cell.d < 1) detail::schema_error(row, 2, "d must be >= 1");
		if (cell.num < 0.0 || cell.den < 0.0 || cell.num > cell.den)
			detail::schema_error(row, 3, "need 0 <= numerator <= denominator");
		dmax = std::max(dmax, cell.d);
		cells.push_back(cell);
	}
	if (cells.empty()) throw std::invalid_argument("exit-rate file has no data rows");

	ExitRateTable tab(static_cast<int>(labels.size()), dmax);
	std::vector<std::vector<char>> seen(labels.size(), std::vector<char>(dmax, 0));
	for (const auto& cell : cells) {
		if (seen[cell.group][cell.d - 1])
			throw std::invalid_argument("duplicate exit-rate cell for notice '" +
			                            labels[cell.group] + "' at d = " + std::to_string(cell.d));
		seen[cell.group][cell.d - 1] = 1;
		tab.numerator[cell.group][cell.d - 1] = cell.num;
		tab.denominator[cell.group][cell.d - 1] = cell.den;
	}
	for (std::size_t g = 0; g < labels.size(); ++g)
		for (int d = 1; d <= dmax; ++d)
			if (!seen[g][d - 1])
				throw std::invalid_argument("missing exit-rate cell for notice '" + labels[g] +
				                            "' at d = " + std::to_string(d));
	if (labels_out) *labels_out = labels;
	return tab;
}

inline ExitRateTable read_exit_rate_csv_file(const std::string& path,
                                             std::vector<std::string>* labels_out = nullptr) {
	std::ifstream in(path);
	if (!in) throw std::invalid_argument("cannot open input file: " + path);
	return read_exit_rate_csv(in, labels_out);
}

inline void write_panel_csv(std::ostream& out, const Panel& panel) {
	out << "id,notice,duration,censored";
	for (const auto& name : panel.covariate_names) out << ",x_" << name;
	out << "\n";
	for (const auto& rec : panel.rows) {
		out << rec.id << ',' << panel.notice_labels.at(rec.notice) << ',' << rec.duration << ','
		    << (rec.censored ? 1 : 0);
		for (double v : rec.x) out << ',' << format_double(v);
		out << "\n";
	}
}

}  // namespace mixhaz
