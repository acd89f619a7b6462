#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixhaz/records.hpp"

namespace mixhaz {

// INI-style configuration: [section] headers, key = value lines, comments
// with '#' or ';'. Keys are unique within a section; lookups are typed and
// report the offending line on parse errors.
class Config {
public:
	static Config parse(std::istream& in) {
		Config cfg;
		std::string line, section;
		int lineno = 0;
		while (std::getline(in, line)) {
			++lineno;
			std::string s = detail::trim(strip_comment(line));
			if (s.empty()) continue;
			if (s.front() == '[') {
				if (s.back() != ']')
					throw std::invalid_argument("config error at line " + std::to_string(lineno) +
					                            ": unterminated section header");
				section = detail::trim(s.substr(1, s.size() - 2));
				if (section.empty())
					throw std::invalid_argument("config error at line " + std::to_string(lineno) +
					                            ": empty section name");
				cfg.sections_[section];  // register even if empty
				continue;
			}
			const auto eq = s.find('=');
			if (eq == std::string::npos)
				throw std::invalid_argument("config error at line " + std::to_string(lineno) +
				                            ": expected key = value");
			const std::string key = detail::trim(s.substr(0, eq));
			const std::string value = detail::trim(s.substr(eq + 1));
			if (key.empty())
				throw std::invalid_argument("config error at line " + std::to_string(lineno) +
				                            ": empty key");
			auto& sec = cfg.sections_[section];
			if (sec.count(key))
				throw std::invalid_argument("config error at line " + std::to_string(lineno) +
				                            ": duplicate key '" + key + "' in section [" + section +
				                            "]");
			sec[key] = value;
		}
		return cfg;
	}

	static Config parse_file(const std::string& path) {
		std::ifstream in(path);
		if (!in) throw std::invalid_argument("config error: cannot open '" + path + "'");
		return parse(in);
	}

	bool has(const std::string& section, const std::string& key) const {
		const auto it = sections_.find(section);
		return it != sections_.end() && it->second.count(key) > 0;
	}

	std::string get_string(const std::string& section, const std::string& key) const {
		const auto it = sections_.find(section);
		if (it == sections_.end() || !it->second.count(key))
			throw std::invalid_argument("config error: missing key '" + key + "' in section [" +
			                            section + "]");
		return it->second.at(key);
	}
	std::string get_string(const std::string& section, const std::string& key,
	                       const std::string& fallback) const {
		return has(section, key) ? get_string(section, key) : fallback;
	}

	double get_double(const std::string& section, const std::string& key) const {
		return parse_double(section, key, get_string(section, key));
	}
	double get_double(const std::string& section, const std::string& key, double fallback) const {
		return has(section, key) ? get_double(section, key) : fallback;
	}

	long long get_int(const std::string& section, const std::string& key) const {
		const std::string v = get_string(section, key);
		try {
			std::size_t pos = 0;
			const long long x = std::stoll(v, &pos);
			if (pos != v.size()) throw std::invalid_argument("trailing characters");
			return x;
		} catch (const std::exception&) {
			throw std::invalid_argument("config error: key '" + key + "' in section [" + section +
			                            "] is not an integer: '" + v + "'");
		}
	}
	long long get_int(const std::string& section, const std::string& key, long long fallback) const {
		return has(section, key) ? get_int(section, key) : fallback;
	}

	bool get_bool(const std::string& section, const std::string& key) const {
		const std::string v = get_string(section, key);
		if (v == "true" || v == "yes" || v == "1") return true;
		if (v == "false" || v == "no" || v == "0") return false;
		throw std::invalid_argument("config error: key '" + key + "' in section [" + section +
		                            "] is not a boolean: '" + v + "'");
	}
	bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
		return has(section, key) ? get_bool(section, key) : fallback;
	}

	std::vector<double> get_double_list(const std::string& section, const std::string& key) const {
		const auto parts = detail::split_csv_line(get_string(section, key));
		std::vector<double> out;
		for (const auto& p : parts) out.push_back(parse_double(section, key, detail::trim(p)));
		return out;
	}
	std::vector<double> get_double_list(const std::string& section, const std::string& key,
	                                    const std::vector<double>& fallback) const {
		return has(section, key) ? get_double_list(section, key) : fallback;
	}

	std::vector<std::string> get_string_list(const std::string& section,
	                                         const std::string& key) const {
		const auto parts = detail::split_csv_line(get_string(section, key));
		std::vector<std::string> out;
		for (const auto& p : parts) out.push_back(detail::trim(p));
		return out;
	}
	std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
	                                         const std::vector<std::string>& fallback) const {
		return has(section, key) ? get_string_list(section, key) : fallback;
	}

	const std::map<std::string, std::map<std::string, std::string>>& sections() const {
		return sections_;
	}

private:
	static std::string strip_comment(const std::string& line) {
		const auto pos = line.find_first_of("#;");
		return pos == std::string::npos ? line : line.substr(0, pos);
	}
	static double parse_double(const std::string& section, const std::string& key,
	                           const std::string& v) {
		try {
			std::size_t pos = 0;
			const double x = std::stod(v, &pos);
			if (pos != v.size()) throw std::invalid_argument("trailing characters");
			return x;
		} catch (const std::exception&) {
			throw std::invalid_argument("config error: key '" + key + "' in section [" + section +
			                            "] is not a number: '" + v + "'");
		}
	}

	std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace mixhaz
