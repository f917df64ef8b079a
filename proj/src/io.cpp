#include "ribreg/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace ribreg::io {

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& tok, int line) {
    const std::string t = trim(tok);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError("expected a number, got '" + t + "'", line);
    return value;
}

long long parse_int(const std::string& tok, int line) {
    const std::string t = trim(tok);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError("expected an integer, got '" + t + "'", line);
    return value;
}

std::string format_coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

PointCloud read_csv(std::istream& in) {
    PointCloud cloud;
    bool any_label = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split(t, ',');
        if (fields.size() != 3 && fields.size() != 4)
            throw ParseError("expected 3 or 4 comma-separated fields", lineno);
        Point3 p(parse_double(fields[0], lineno), parse_double(fields[1], lineno),
                 parse_double(fields[2], lineno));
        if (!p.allFinite()) throw ParseError("non-finite coordinate", lineno);
        if (fields.size() == 4) {
            cloud.append(p, static_cast<int>(parse_int(fields[3], lineno)));
            any_label = true;
        } else {
            if (any_label) throw ParseError("label column missing after labeled rows", lineno);
            cloud.append(p);
        }
    }
    if (cloud.empty()) throw EmptyFile("point cloud file contains no points");
    return cloud;
}

PointCloud read_ply(std::istream& in) {
    std::string line;
    int lineno = 0;
    auto next_line = [&](std::string& out) {
        if (!std::getline(in, out)) throw ParseError("unexpected end of file", lineno + 1);
        ++lineno;
        out = trim(out);
    };

    next_line(line);
    if (line != "ply") throw ParseError("missing 'ply' magic", lineno);

    long long vertex_count = -1;
    std::vector<std::string> properties;
    bool in_vertex_element = false;
    bool saw_format = false;
    while (true) {
        next_line(line);
        if (line.empty() || line.rfind("comment", 0) == 0) continue;
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string kind, version;
            ls >> kind >> version;
            if (kind != "ascii") throw ParseError("only ascii PLY is supported", lineno);
            saw_format = true;
        } else if (word == "element") {
            std::string name;
            long long count = 0;
            ls >> name >> count;
            if (name == "vertex") {
                vertex_count = count;
                in_vertex_element = true;
            } else {
                throw ParseError("unsupported element '" + name + "'", lineno);
            }
        } else if (word == "property") {
            if (!in_vertex_element) throw ParseError("property outside vertex element", lineno);
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw ParseError("list properties are not supported", lineno);
            properties.push_back(name);
        } else {
            throw ParseError("unrecognized header line '" + line + "'", lineno);
        }
    }
    if (!saw_format) throw ParseError("missing format line", lineno);
    if (vertex_count < 0) throw ParseError("missing vertex element", lineno);

    auto find_prop = [&](const std::string& name) {
        const auto it = std::find(properties.begin(), properties.end(), name);
        return it == properties.end() ? -1 : static_cast<int>(it - properties.begin());
    };
    const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
    const int ilabel = find_prop("label");
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element must carry x y z", lineno);

    PointCloud cloud;
    for (long long v = 0; v < vertex_count; ++v) {
        next_line(line);
        const auto fields = split(line, ' ');
        std::vector<std::string> toks;
        for (const auto& f : fields)
            if (!trim(f).empty()) toks.push_back(trim(f));
        if (toks.size() != properties.size())
            throw ParseError("expected " + std::to_string(properties.size()) + " values", lineno);
        Point3 p(parse_double(toks[ix], lineno), parse_double(toks[iy], lineno),
                 parse_double(toks[iz], lineno));
        if (!p.allFinite()) throw ParseError("non-finite coordinate", lineno);
        if (ilabel >= 0)
            cloud.append(p, static_cast<int>(parse_int(toks[ilabel], lineno)));
        else
            cloud.append(p);
    }
    if (cloud.empty()) throw EmptyFile("PLY file contains no vertices");
    return cloud;
}

}  // namespace

CloudFormat format_from_path(const std::string& path) {
    const std::string ext = to_lower(std::filesystem::path(path).extension().string());
    if (ext == ".ply") return CloudFormat::AsciiPly;
    if (ext == ".csv" || ext == ".xyz" || ext == ".txt") return CloudFormat::XyzCsv;
    throw IoError("cannot infer point cloud format from '" + path + "'");
}

PointCloud read_point_cloud(const std::string& path, CloudFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    if (in.peek() == std::ifstream::traits_type::eof())
        throw EmptyFile("'" + path + "' is empty");
    return format == CloudFormat::XyzCsv ? read_csv(in) : read_ply(in);
}

PointCloud read_point_cloud(const std::string& path) {
    return read_point_cloud(path, format_from_path(path));
}

void write_point_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
    std::ostringstream out;
    const bool labeled = cloud.has_labels();
    if (format == CloudFormat::XyzCsv) {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Point3& p = cloud.points[i];
            out << format_coord(p.x()) << ',' << format_coord(p.y()) << ',' << format_coord(p.z());
            if (labeled) out << ',' << cloud.labels[i];
            out << '\n';
        }
    } else {
        out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n';
        out << "property float x\nproperty float y\nproperty float z\n";
        if (labeled) out << "property uchar label\n";
        out << "end_header\n";
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Point3& p = cloud.points[i];
            out << format_coord(p.x()) << ' ' << format_coord(p.y()) << ' ' << format_coord(p.z());
            if (labeled) out << ' ' << cloud.labels[i];
            out << '\n';
        }
    }
    write_file_atomic(path, out.str());
}

void write_point_cloud(const PointCloud& cloud, const std::string& path) {
    write_point_cloud(cloud, path, format_from_path(path));
}

int RunConfig::total_rib_samples() const {
    int total = 0;
    for (int n : rib_samples) total += n;
    return total;
}

void RunConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw SchemaError(std::string("config field '") + name + "' must be >= 1");
    };
    positive(som_stage1_rows, "som_stage1_rows");
    positive(som_stage1_cols, "som_stage1_cols");
    positive(som_stage2_rows, "som_stage2_rows");
    positive(som_stage2_cols, "som_stage2_cols");
    positive(som_stage1_epochs, "som_stage1_epochs");
    positive(som_stage2_epochs, "som_stage2_epochs");
    positive(downsample_count, "downsample_count");
    for (int i = 0; i < 4; ++i)
        positive(rib_samples[i], ("rib_samples_" + std::to_string(i + 2)).c_str());
    if (!(som_learning_rate > 0.0 && som_learning_rate <= 1.0))
        throw SchemaError("config field 'som_learning_rate' must be in (0, 1]");
    if (!(t_theta_deg > 0.0 && t_theta_deg < 180.0))
        throw SchemaError("config field 't_theta_deg' must be in (0, 180)");
    if (n_r < 3) throw SchemaError("config field 'n_r' must be >= 3");
}

namespace {

const char* const kConfigKeys[] = {
    "som_stage1_rows", "som_stage1_cols", "som_stage2_rows", "som_stage2_cols",
    "som_learning_rate", "som_stage1_epochs", "som_stage2_epochs", "seed",
    "t_theta_deg", "rib_samples_2", "rib_samples_3", "rib_samples_4",
    "rib_samples_5", "n_r", "downsample_count",
};

}  // namespace

RunConfig read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw SchemaError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "som_stage1_rows") cfg.som_stage1_rows = static_cast<int>(parse_int(value, lineno));
            else if (key == "som_stage1_cols") cfg.som_stage1_cols = static_cast<int>(parse_int(value, lineno));
            else if (key == "som_stage2_rows") cfg.som_stage2_rows = static_cast<int>(parse_int(value, lineno));
            else if (key == "som_stage2_cols") cfg.som_stage2_cols = static_cast<int>(parse_int(value, lineno));
            else if (key == "som_learning_rate") cfg.som_learning_rate = parse_double(value, lineno);
            else if (key == "som_stage1_epochs") cfg.som_stage1_epochs = static_cast<int>(parse_int(value, lineno));
            else if (key == "som_stage2_epochs") cfg.som_stage2_epochs = static_cast<int>(parse_int(value, lineno));
            else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, lineno));
            else if (key == "t_theta_deg") cfg.t_theta_deg = parse_double(value, lineno);
            else if (key == "rib_samples_2") cfg.rib_samples[0] = static_cast<int>(parse_int(value, lineno));
            else if (key == "rib_samples_3") cfg.rib_samples[1] = static_cast<int>(parse_int(value, lineno));
            else if (key == "rib_samples_4") cfg.rib_samples[2] = static_cast<int>(parse_int(value, lineno));
            else if (key == "rib_samples_5") cfg.rib_samples[3] = static_cast<int>(parse_int(value, lineno));
            else if (key == "n_r") cfg.n_r = static_cast<int>(parse_int(value, lineno));
            else if (key == "downsample_count") cfg.downsample_count = static_cast<int>(parse_int(value, lineno));
            else throw SchemaError("unknown config key '" + key + "'");
        } catch (const ParseError& e) {
            throw SchemaError("config field '" + key + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

void write_config(const RunConfig& config, const std::string& path) {
    config.validate();
    std::ostringstream out;
    std::map<std::string, std::string> values = {
        {"som_stage1_rows", std::to_string(config.som_stage1_rows)},
        {"som_stage1_cols", std::to_string(config.som_stage1_cols)},
        {"som_stage2_rows", std::to_string(config.som_stage2_rows)},
        {"som_stage2_cols", std::to_string(config.som_stage2_cols)},
        {"som_learning_rate", format_coord(config.som_learning_rate)},
        {"som_stage1_epochs", std::to_string(config.som_stage1_epochs)},
        {"som_stage2_epochs", std::to_string(config.som_stage2_epochs)},
        {"seed", std::to_string(config.seed)},
        {"t_theta_deg", format_coord(config.t_theta_deg)},
        {"rib_samples_2", std::to_string(config.rib_samples[0])},
        {"rib_samples_3", std::to_string(config.rib_samples[1])},
        {"rib_samples_4", std::to_string(config.rib_samples[2])},
        {"rib_samples_5", std::to_string(config.rib_samples[3])},
        {"n_r", std::to_string(config.n_r)},
        {"downsample_count", std::to_string(config.downsample_count)},
    };
    for (const char* key : kConfigKeys) out << key << " = " << values.at(key) << '\n';
    write_file_atomic(path, out.str());
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot replace '" + path + "': " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace ribreg::io
