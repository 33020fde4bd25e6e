#include "mag/text_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace mag {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    double v = std::strtod(tmp.c_str(), &end);
    if (end == tmp.c_str()) throw std::runtime_error("bad number: '" + tmp + "'");
    return v;
}

long parse_long(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    long v = std::strtol(tmp.c_str(), &end, 10);
    if (end == tmp.c_str()) throw std::runtime_error("bad integer: '" + tmp + "'");
    return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string join_ints(const std::vector<int>& ids, char sep) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(ids[i]);
    }
    return out;
}

std::vector<int> parse_ints(std::string_view s, char sep) {
    std::vector<int> out;
    for (const auto& tok : split(s, sep)) {
        auto t = trim(tok);
        if (t.empty()) continue;
        out.push_back(static_cast<int>(parse_long(t)));
    }
    return out;
}

}  // namespace mag
