#include "lindensim/osm.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace lindensim {

const OsmNode* OsmDocument::find_node(std::int64_t id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

namespace {

// Minimal streaming XML reader for the flat OSM element subset. Tracks line
// numbers for error reporting. Handles declarations, comments, CDATA-free
// attribute values and the five standard entities.
class XmlReader {
public:
    explicit XmlReader(const std::string& text) : text_(text) {}

    struct Tag {
        std::string name;
        std::vector<std::pair<std::string, std::string>> attrs;
        bool closing = false;       // </name>
        bool self_closing = false;  // <name/>
        int line = 1;
    };

    /// Advance to the next tag; false at end of input.
    bool next(Tag& out) {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '\n') ++line_;
            if (c != '<') {
                ++pos_;
                continue;
            }
            if (starts_with("<?")) {
                skip_until("?>");
                continue;
            }
            if (starts_with("<!--")) {
                skip_until("-->");
                continue;
            }
            if (starts_with("<!")) {
                skip_until(">");
                continue;
            }
            return parse_tag(out);
        }
        return false;
    }

    int line() const { return line_; }

private:
    bool starts_with(std::string_view s) const {
        return text_.compare(pos_, s.size(), s) == 0;
    }

    void skip_until(std::string_view end) {
        const auto at = text_.find(end, pos_);
        if (at == std::string::npos) throw OsmParseError("unterminated markup", line_);
        line_ += static_cast<int>(std::count(text_.begin() + pos_, text_.begin() + at, '\n'));
        pos_ = at + end.size();
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    static bool is_name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
               c == ':' || c == '.';
    }

    std::string decode_entities(const std::string& raw) const {
        if (raw.find('&') == std::string::npos) return raw;
        std::string out;
        out.reserve(raw.size());
        for (std::size_t i = 0; i < raw.size();) {
            if (raw[i] != '&') {
                out += raw[i++];
                continue;
            }
            const auto semi = raw.find(';', i);
            if (semi == std::string::npos) throw OsmParseError("bad entity", line_);
            const std::string ent = raw.substr(i + 1, semi - i - 1);
            if (ent == "amp") out += '&';
            else if (ent == "lt") out += '<';
            else if (ent == "gt") out += '>';
            else if (ent == "quot") out += '"';
            else if (ent == "apos") out += '\'';
            else if (!ent.empty() && ent[0] == '#') {
                const long code = std::stol(ent.substr(ent[1] == 'x' ? 2 : 1), nullptr,
                                            ent[1] == 'x' ? 16 : 10);
                out += static_cast<char>(code);
            } else {
                throw OsmParseError("unknown entity &" + ent + ";", line_);
            }
            i = semi + 1;
        }
        return out;
    }

    bool parse_tag(Tag& out) {
        out = Tag{};
        out.line = line_;
        ++pos_;  // '<'
        if (pos_ < text_.size() && text_[pos_] == '/') {
            out.closing = true;
            ++pos_;
        }
        const std::size_t name_start = pos_;
        while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
        out.name = text_.substr(name_start, pos_ - name_start);
        if (out.name.empty()) throw OsmParseError("expected element name", line_);
        for (;;) {
            skip_ws();
            if (pos_ >= text_.size()) throw OsmParseError("unterminated tag", line_);
            if (text_[pos_] == '>') {
                ++pos_;
                return true;
            }
            if (text_[pos_] == '/') {
                ++pos_;
                if (pos_ >= text_.size() || text_[pos_] != '>')
                    throw OsmParseError("expected '>' after '/'", line_);
                ++pos_;
                out.self_closing = true;
                return true;
            }
            if (out.closing) throw OsmParseError("attributes on closing tag", line_);
            const std::size_t astart = pos_;
            while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
            const std::string key = text_.substr(astart, pos_ - astart);
            if (key.empty()) throw OsmParseError("expected attribute name", line_);
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] != '=')
                throw OsmParseError("expected '=' after attribute name", line_);
            ++pos_;
            skip_ws();
            if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
                throw OsmParseError("expected quoted attribute value", line_);
            const char quote = text_[pos_++];
            const std::size_t vstart = pos_;
            while (pos_ < text_.size() && text_[pos_] != quote) {
                if (text_[pos_] == '\n') ++line_;
                ++pos_;
            }
            if (pos_ >= text_.size()) throw OsmParseError("unterminated attribute value", line_);
            const std::string value = decode_entities(text_.substr(vstart, pos_ - vstart));
            ++pos_;
            out.attrs.emplace_back(key, value);
        }
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

const std::string* attr(const XmlReader::Tag& tag, std::string_view key) {
    for (const auto& [k, v] : tag.attrs) {
        if (k == key) return &v;
    }
    return nullptr;
}

double require_double(const XmlReader::Tag& tag, std::string_view key) {
    const std::string* v = attr(tag, key);
    if (!v) {
        throw OsmParseError("<" + tag.name + "> missing attribute '" + std::string(key) + "'",
                            tag.line);
    }
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        throw OsmParseError("bad numeric attribute '" + std::string(key) + "'", tag.line);
    }
}

std::int64_t require_int(const XmlReader::Tag& tag, std::string_view key) {
    const std::string* v = attr(tag, key);
    if (!v) {
        throw OsmParseError("<" + tag.name + "> missing attribute '" + std::string(key) + "'",
                            tag.line);
    }
    try {
        return std::stoll(*v);
    } catch (const std::exception&) {
        throw OsmParseError("bad integer attribute '" + std::string(key) + "'", tag.line);
    }
}

}  // namespace

OsmDocument parse_osm(const std::string& xml_text) {
    OsmDocument doc;
    XmlReader reader(xml_text);
    XmlReader::Tag tag;

    bool in_osm = false;
    bool osm_seen = false;
    enum class Open { none, node, way } open = Open::none;

    while (reader.next(tag)) {
        if (tag.closing) {
            if (tag.name == "node" || tag.name == "way") open = Open::none;
            else if (tag.name == "osm") in_osm = false;
            continue;
        }
        if (tag.name == "osm") {
            in_osm = !tag.self_closing;
            osm_seen = true;
            continue;
        }
        if (!in_osm) continue;

        if (tag.name == "node") {
            OsmNode n;
            n.id = require_int(tag, "id");
            n.lat = require_double(tag, "lat");
            n.lon = require_double(tag, "lon");
            doc.nodes.push_back(std::move(n));
            open = tag.self_closing ? Open::none : Open::node;
        } else if (tag.name == "way") {
            OsmWay w;
            w.id = require_int(tag, "id");
            doc.ways.push_back(std::move(w));
            open = tag.self_closing ? Open::none : Open::way;
        } else if (tag.name == "nd") {
            if (open != Open::way) throw OsmParseError("<nd> outside <way>", tag.line);
            doc.ways.back().node_refs.push_back(require_int(tag, "ref"));
        } else if (tag.name == "tag") {
            const std::string* k = attr(tag, "k");
            const std::string* v = attr(tag, "v");
            if (!k || !v) throw OsmParseError("<tag> missing k/v", tag.line);
            if (open == Open::way) doc.ways.back().tags[*k] = *v;
            else if (open == Open::node) doc.nodes.back().tags[*k] = *v;
            // tags on other elements (e.g. relations we skip) are dropped
        }
        // bounds, relation, member and anything else: ignored
    }
    if (!osm_seen) throw OsmParseError("no <osm> root element", reader.line());

    // referential integrity
    std::unordered_set<std::int64_t> ids;
    ids.reserve(doc.nodes.size() * 2);
    for (const auto& n : doc.nodes) ids.insert(n.id);
    std::vector<std::int64_t> missing;
    for (const auto& w : doc.ways) {
        for (const auto ref : w.node_refs) {
            if (!ids.count(ref)) missing.push_back(ref);
        }
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string msg = "ways reference unknown nodes:";
        for (const auto id : missing) msg += " " + std::to_string(id);
        throw DanglingReferenceError(std::move(msg), std::move(missing));
    }
    return doc;
}

Vec2 project(double lat, double lon, const Projection& proj) {
    if (std::abs(lat) > 90.0 || std::abs(lon) > 180.0)
        throw std::domain_error("lat/lon out of range");
    const double deg2rad = M_PI / 180.0;
    const double x = proj.earth_radius * std::cos(proj.ref_lat * deg2rad) *
                     (lon - proj.ref_lon) * deg2rad;
    const double y = proj.earth_radius * (lat - proj.ref_lat) * deg2rad;
    return {x, y};
}

std::pair<double, double> unproject(const Vec2& p, const Projection& proj) {
    const double rad2deg = 180.0 / M_PI;
    const double lat = proj.ref_lat + (p.y / proj.earth_radius) * rad2deg;
    const double lon =
        proj.ref_lon +
        (p.x / (proj.earth_radius * std::cos(proj.ref_lat * M_PI / 180.0))) * rad2deg;
    return {lat, lon};
}

}  // namespace lindensim
