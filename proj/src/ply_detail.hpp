#pragma once

// Internal PLY parsing helpers shared by the point-cloud and mesh readers.
// Handles ascii and binary_little_endian, scalar and list properties.

#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "gpcd/errors.hpp"

namespace gpcd::ply {

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

enum class Format { ascii, binary_le };

struct Property {
    std::string name;
    std::string type;      // scalar type, or the value type of a list
    bool is_list = false;
    std::string count_type;
};

struct Element {
    std::string name;
    size_t count = 0;
    std::vector<Property> props;
};

struct Header {
    Format format = Format::ascii;
    std::vector<Element> elements;
};

inline size_t scalar_size(const std::string& type) {
    if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") return 1;
    if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
    if (type == "int" || type == "int32" || type == "uint" || type == "uint32") return 4;
    if (type == "float" || type == "float32") return 4;
    if (type == "double" || type == "float64") return 8;
    throw io_error("ply: unknown scalar type '" + type + "'");
}

inline double decode_scalar(const char* bytes, const std::string& type) {
    auto load = [&](auto v) {
        std::memcpy(&v, bytes, sizeof v);
        return static_cast<double>(v);
    };
    if (type == "char" || type == "int8") return load(int8_t{});
    if (type == "uchar" || type == "uint8") return load(uint8_t{});
    if (type == "short" || type == "int16") return load(int16_t{});
    if (type == "ushort" || type == "uint16") return load(uint16_t{});
    if (type == "int" || type == "int32") return load(int32_t{});
    if (type == "uint" || type == "uint32") return load(uint32_t{});
    if (type == "float" || type == "float32") return load(float{});
    if (type == "double" || type == "float64") return load(double{});
    throw io_error("ply: unknown scalar type '" + type + "'");
}

inline Header parse_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw io_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw io_error(path + ": not a PLY file");

    Header header;
    bool have_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii") header.format = Format::ascii;
            else if (fmt == "binary_little_endian") header.format = Format::binary_le;
            else throw io_error(path + ": unsupported PLY format '" + fmt + "'");
            have_format = true;
        } else if (word == "element") {
            Element e;
            ls >> e.name >> e.count;
            if (ls.fail()) throw io_error(path + ": malformed element line");
            header.elements.push_back(e);
        } else if (word == "property") {
            if (header.elements.empty()) throw io_error(path + ": property before element");
            Property p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            if (ls.fail()) throw io_error(path + ": malformed property line");
            header.elements.back().props.push_back(p);
        } else if (word == "end_header") {
            if (!have_format) throw io_error(path + ": missing format line");
            return header;
        } else {
            throw io_error(path + ": unrecognized header keyword '" + word + "'");
        }
    }
    throw io_error(path + ": missing end_header");
}

// Reads every row of one element, invoking row(scalars, lists) where scalars
// holds the scalar properties in declaration order and lists likewise.
inline void read_element(std::istream& in, Format format, const Element& elem,
                         const std::string& path,
                         const std::function<void(const std::vector<double>&,
                                                  const std::vector<std::vector<double>>&)>& row) {
    std::vector<double> scalars;
    std::vector<std::vector<double>> lists;
    std::vector<char> buf(8);
    for (size_t i = 0; i < elem.count; ++i) {
        scalars.clear();
        lists.clear();
        for (const Property& p : elem.props) {
            if (format == Format::ascii) {
                if (p.is_list) {
                    size_t count = 0;
                    if (!(in >> count)) throw io_error(path + ": truncated ascii list");
                    std::vector<double> vals(count);
                    for (size_t j = 0; j < count; ++j)
                        if (!(in >> vals[j])) throw io_error(path + ": truncated ascii list");
                    lists.push_back(std::move(vals));
                } else {
                    double v = 0.0;
                    if (!(in >> v)) throw io_error(path + ": truncated ascii data");
                    scalars.push_back(v);
                }
            } else {
                if (p.is_list) {
                    const size_t csz = scalar_size(p.count_type);
                    if (!in.read(buf.data(), static_cast<std::streamsize>(csz)))
                        throw io_error(path + ": truncated binary list");
                    const auto count = static_cast<size_t>(decode_scalar(buf.data(), p.count_type));
                    const size_t vsz = scalar_size(p.type);
                    std::vector<double> vals(count);
                    for (size_t j = 0; j < count; ++j) {
                        if (!in.read(buf.data(), static_cast<std::streamsize>(vsz)))
                            throw io_error(path + ": truncated binary list");
                        vals[j] = decode_scalar(buf.data(), p.type);
                    }
                    lists.push_back(std::move(vals));
                } else {
                    const size_t vsz = scalar_size(p.type);
                    if (!in.read(buf.data(), static_cast<std::streamsize>(vsz)))
                        throw io_error(path + ": truncated binary data");
                    scalars.push_back(decode_scalar(buf.data(), p.type));
                }
            }
        }
        row(scalars, lists);
    }
}

}  // namespace gpcd::ply
