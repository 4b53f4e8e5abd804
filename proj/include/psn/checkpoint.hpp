#pragma once

// Parameter checkpoints: a text header listing named float32 arrays followed
// by one little-endian payload.
//
//   PSNCKPT v1\n
//   entries <n>\n
//   <name> <shape> <offset> <count>\n     (n lines; shape is "4x4", "16" or "-" for scalars)
//   end\n
//   <payload: sum(count) float32 values, offsets counted in elements>
//
// Names must be non-empty and free of whitespace.

#include <bit>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "psn/io.hpp"
#include "psn/tensor.hpp"

namespace psn::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

inline constexpr std::string_view kMagic = "PSNCKPT v1";

struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

namespace detail {

inline std::string shape_token(const Shape& s)
{
    if (s.empty())
        return "-";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i)
            out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

inline Shape parse_shape(const std::string& tok, std::size_t offset)
{
    if (tok == "-")
        return {};
    Shape s;
    std::size_t pos = 0;
    while (pos <= tok.size()) {
        auto next = tok.find('x', pos);
        auto part = tok.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
            throw ParseError("bad shape '" + tok + "'", offset);
        s.push_back(std::stoull(part));
        if (next == std::string::npos)
            break;
        pos = next + 1;
    }
    return s;
}

} // namespace detail

inline std::string serialize(const std::vector<Entry>& entries)
{
    std::ostringstream head;
    head << kMagic << "\nentries " << entries.size() << "\n";
    std::size_t offset = 0;
    for (const auto& e : entries) {
        if (e.name.empty() || e.name.find_first_of(" \t\r\n") != std::string::npos)
            throw ContractError("checkpoint entry name must be non-empty without whitespace: '" + e.name + "'");
        if (shape_numel(e.shape) != e.values.size())
            throw ContractError("checkpoint entry '" + e.name + "' shape does not match its value count");
        head << e.name << ' ' << detail::shape_token(e.shape) << ' ' << offset << ' ' << e.values.size() << "\n";
        offset += e.values.size();
    }
    head << "end\n";
    std::string out = head.str();
    const std::size_t start = out.size();
    out.resize(start + offset * sizeof(float));
    char* p = out.data() + start;
    for (const auto& e : entries) {
        std::memcpy(p, e.values.data(), e.values.size() * sizeof(float));
        p += e.values.size() * sizeof(float);
    }
    return out;
}

inline std::vector<Entry> deserialize(std::string_view bytes)
{
    std::size_t pos = 0;
    auto next_line = [&]() {
        auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos)
            throw ParseError("truncated checkpoint header", bytes.size());
        std::string line(bytes.substr(pos, nl - pos));
        const std::size_t at = pos;
        pos = nl + 1;
        return std::pair{line, at};
    };

    auto [magic, magic_at] = next_line();
    if (magic != kMagic)
        throw ParseError("not a checkpoint (bad magic '" + magic + "')", magic_at);

    auto [count_line, count_at] = next_line();
    std::istringstream cs(count_line);
    std::string word;
    std::size_t n = 0;
    if (!(cs >> word >> n) || word != "entries")
        throw ParseError("expected 'entries <n>'", count_at);

    struct Header {
        std::string name;
        Shape shape;
        std::size_t offset, count, at;
    };
    std::vector<Header> headers;
    for (std::size_t i = 0; i < n; ++i) {
        auto [line, at] = next_line();
        std::istringstream ls(line);
        Header h{};
        std::string shape_tok;
        if (!(ls >> h.name >> shape_tok >> h.offset >> h.count))
            throw ParseError("malformed entry line '" + line + "'", at);
        h.shape = detail::parse_shape(shape_tok, at);
        h.at = at;
        if (shape_numel(h.shape) != h.count)
            throw ParseError("entry '" + h.name + "' count disagrees with shape", at);
        headers.push_back(std::move(h));
    }
    auto [end_line, end_at] = next_line();
    if (end_line != "end")
        throw ParseError("expected 'end' after entry table", end_at);

    const std::string_view payload = bytes.substr(pos);
    std::vector<Entry> out;
    out.reserve(headers.size());
    for (auto& h : headers) {
        const std::size_t first = h.offset * sizeof(float);
        const std::size_t len = h.count * sizeof(float);
        if (first + len > payload.size())
            throw ParseError("payload truncated for entry '" + h.name + "'", pos + payload.size());
        Entry e{std::move(h.name), std::move(h.shape), std::vector<float>(h.count)};
        std::memcpy(e.values.data(), payload.data() + first, len);
        out.push_back(std::move(e));
    }
    return out;
}

inline void save(const std::filesystem::path& path, const std::vector<Entry>& entries)
{
    io::write_atomic(path, serialize(entries));
}

inline std::vector<Entry> load(const std::filesystem::path& path) { return deserialize(io::read_all(path)); }

inline Entry entry_of(std::string name, const Tensor<float>& t) { return {std::move(name), t.shape(), t.to_vector()}; }

} // namespace psn::checkpoint
