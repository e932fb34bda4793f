#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "gprl/error.hpp"
#include "gprl/genetics.hpp"

namespace gprl {

namespace {

std::string number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quote(std::string const& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(std::string const& line, std::size_t line_no)
{
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char const c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c != '\r') {
            fields.back() += c;
        }
    }
    if (quoted) {
        throw DataError("archive csv line " + std::to_string(line_no) + ": unterminated quote");
    }
    return fields;
}

double to_double(std::string const& s, std::size_t line_no)
{
    double v = 0.0;
    auto const* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw DataError("archive csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
}

} // namespace

void write_archive_csv(std::ostream& out, std::span<ArchiveRow const> rows)
{
    out << "complexity,model_fitness,real_penalty,expression\n";
    for (auto const& r : rows) {
        std::string joined;
        for (std::size_t i = 0; i < r.expressions.size(); ++i) {
            if (i > 0) joined += "; ";
            joined += r.expressions[i];
        }
        out << r.complexity << ',' << number(r.model_fitness) << ','
            << (r.real_penalty ? number(*r.real_penalty) : std::string{}) << ',' << quote(joined) << '\n';
    }
}

std::vector<ArchiveRow> read_archive_csv(std::istream& in)
{
    std::vector<ArchiveRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) {
            continue;
        }
        auto const f = split_csv_line(line, line_no);
        if (f.size() != 4) {
            throw DataError("archive csv line " + std::to_string(line_no) + ": expected 4 fields");
        }
        ArchiveRow row;
        row.complexity = static_cast<int>(to_double(f[0], line_no));
        row.model_fitness = to_double(f[1], line_no);
        if (!f[2].empty()) {
            row.real_penalty = to_double(f[2], line_no);
        }
        std::size_t start = 0;
        for (;;) {
            auto const sep = f[3].find("; ", start);
            row.expressions.push_back(f[3].substr(start, sep - start));
            if (sep == std::string::npos) break;
            start = sep + 2;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ArchiveRow> archive_rows(ParetoArchive const& archive, std::span<std::string const> names)
{
    std::vector<ArchiveRow> rows;
    for (auto const& m : archive.front()) {
        ArchiveRow r;
        r.complexity = m.complexity;
        r.model_fitness = m.fitness;
        for (auto const& t : m.policy.trees) {
            r.expressions.push_back(format_tree(t, names));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_squashed_csv(std::ostream& out, std::span<SquashedRow const> rows)
{
    out << "complexity,median_penalty,min_penalty,max_penalty,runs\n";
    for (auto const& r : rows) {
        out << r.complexity << ',' << number(r.median) << ',' << number(r.min) << ',' << number(r.max) << ','
            << r.runs << '\n';
    }
}

} // namespace gprl
