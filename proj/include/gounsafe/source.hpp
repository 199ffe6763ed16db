#pragma once

#include <stdexcept>
#include <string>

namespace gounsafe {

struct SourceUnit {
    std::string path;
    std::string text;
    std::string package_name;
    std::string module_path;
};

struct Span {
    int line = 0;
    int col = 0;
    int end_line = 0;
    int end_col = 0;

    bool contains(int l, int c) const {
        if (l < line || l > end_line) return false;
        if (l == line && c < col) return false;
        if (l == end_line && c > end_col) return false;
        return true;
    }

    bool operator==(const Span& o) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int col)
        : std::runtime_error(msg + " at " + std::to_string(line) + ":" + std::to_string(col)),
          line(line), col(col) {}
    int line;
    int col;
};

class OrphanUsage : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gounsafe
