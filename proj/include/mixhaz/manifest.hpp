#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace mixhaz {

// FNV-1a hash of a file's bytes, for recording inputs in run manifests
inline std::uint64_t fnv1a_file(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw std::invalid_argument("cannot open input for hashing: '" + path + "'");
	std::uint64_t h = 1469598103934665603ULL;
	char buf[1 << 16];
	while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
		const std::streamsize got = in.gcount();
		for (std::streamsize i = 0; i < got; ++i) {
			h ^= static_cast<unsigned char>(buf[i]);
			h *= 1099511628211ULL;
		}
	}
	return h;
}

inline std::string hex64(std::uint64_t x) {
	static const char* digits = "0123456789abcdef";
	std::string s(16, '0');
	for (int i = 15; i >= 0; --i) {
		s[i] = digits[x & 0xF];
		x >>= 4;
	}
	return s;
}

// Everything needed to reproduce a run; deliberately no timestamps so that
// identical invocations produce byte-identical manifests.
struct ManifestInfo {
	std::string command;
	std::uint64_t seed = 0;
	int threads = 1;
	std::map<std::string, std::string> inputs;   // path -> content hash
	std::map<std::string, std::string> outputs;  // role -> path
	nlohmann::json config_echo = nlohmann::json::object();
	nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json manifest_json(const ManifestInfo& info) {
	nlohmann::json j;
	j["command"] = info.command;
	j["seed"] = info.seed;
	j["threads"] = info.threads;
	j["inputs"] = info.inputs;
	j["outputs"] = info.outputs;
	j["config"] = info.config_echo;
	if (!info.extra.empty()) j["extra"] = info.extra;
	return j;
}

inline void write_manifest(const std::string& path, const ManifestInfo& info) {
	std::ofstream out(path);
	if (!out) throw std::runtime_error("cannot write manifest: '" + path + "'");
	out << manifest_json(info).dump(2) << "\n";
}

}  // namespace mixhaz
