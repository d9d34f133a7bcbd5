#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hbnode/errors.hpp"

namespace hbnode {

/// Shortest round-trip decimal form; "nan"/"inf"/"-inf" for non-finite.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// One CSV row assembled cell by cell.
class CsvRow {
public:
    CsvRow& operator<<(double v) { return push(format_double(v)); }
    CsvRow& operator<<(int v) { return push(std::to_string(v)); }
    CsvRow& operator<<(long v) { return push(std::to_string(v)); }
    CsvRow& operator<<(long long v) { return push(std::to_string(v)); }
    CsvRow& operator<<(unsigned v) { return push(std::to_string(v)); }
    CsvRow& operator<<(unsigned long v) { return push(std::to_string(v)); }
    CsvRow& operator<<(unsigned long long v) { return push(std::to_string(v)); }
    CsvRow& operator<<(bool v) { return push(v ? "1" : "0"); }
    CsvRow& operator<<(const char* v) { return push(quote(v)); }
    CsvRow& operator<<(const std::string& v) { return push(quote(v)); }

    /// Empty cell.
    CsvRow& blank() { return push(""); }

    std::string str() const {
        std::string s;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (i) s += ',';
            s += cells_[i];
        }
        return s;
    }
    std::size_t size() const { return cells_.size(); }

private:
    CsvRow& push(std::string s) {
        cells_.push_back(std::move(s));
        return *this;
    }
    static std::string quote(std::string_view v) {
        if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
        std::string q = "\"";
        for (char c : v) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }
    std::vector<std::string> cells_;
};

/// Buffered CSV table with a fixed header; rows are checked for width.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(const CsvRow& row) {
        require_dim(row.size() == header_.size(),
                    "CsvTable: row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(header_.size()));
        body_ += row.str();
        body_ += '\n';
    }

    /// Appends the rows (not the header) of another table with the same header.
    void append(const CsvTable& other) {
        require_dim(other.header_ == header_, "CsvTable: header mismatch on append");
        body_ += other.body_;
    }

    std::string header_line() const {
        CsvRow r;
        for (const auto& h : header_) r << h;
        return r.str() + '\n';
    }
    const std::string& body() const { return body_; }
    const std::vector<std::string>& header() const { return header_; }

    void write(std::ostream& os) const { os << header_line() << body_; }

private:
    std::vector<std::string> header_;
    std::string body_;
};

}  // namespace hbnode
