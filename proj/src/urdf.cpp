#include "equibim/urdf.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

namespace equibim {

namespace {

// ---------------------------------------------------------------------------
// Minimal XML reader: elements, attributes, comments, declarations. No CDATA,
// namespaces or text payloads; that is all the robot-description subset uses.

struct XmlAttr {
    std::string name, value;
};

struct XmlNode {
    std::string name;
    std::vector<XmlAttr> attrs;
    std::vector<XmlNode> children;
    int line = 0, col = 0;

    const std::string* attr(const std::string& n) const {
        for (const auto& a : attrs)
            if (a.name == n) return &a.value;
        return nullptr;
    }
    const XmlNode* child(const std::string& n) const {
        for (const auto& c : children)
            if (c.name == n) return &c;
        return nullptr;
    }
};

class XmlReader {
  public:
    explicit XmlReader(const std::string& text) : s_(text) {}

    XmlNode parse_document() {
        skip_misc();
        if (eof()) fail("expected a root element");
        XmlNode root = parse_element();
        skip_misc();
        if (!eof()) fail("trailing content after the root element");
        return root;
    }

  private:
    const std::string& s_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return s_[pos_]; }
    bool starts_with(const char* t) const { return s_.compare(pos_, strlen(t), t) == 0; }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, col_, msg); }

    char advance() {
        char c = s_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r'))
            advance();
    }

    void expect(char c) {
        if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
        advance();
    }

    void skip_until(const char* terminator) {
        size_t n = strlen(terminator);
        while (!eof()) {
            if (s_.compare(pos_, n, terminator) == 0) {
                for (size_t i = 0; i < n; ++i) advance();
                return;
            }
            advance();
        }
        fail(std::string("unterminated construct, expected \"") + terminator + "\"");
    }

    // Comments, declarations and whitespace between elements.
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (eof()) return;
            if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<?")) {
                skip_until("?>");
            } else if (starts_with("<!")) {
                skip_until(">");
            } else if (peek() != '<') {
                fail("unexpected text content");
            } else {
                return;
            }
        }
    }

    static bool name_char(char c) {
        return isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
               c == ':';
    }

    std::string parse_name() {
        if (eof() || !name_char(peek())) fail("expected a name");
        std::string n;
        while (!eof() && name_char(peek())) n += advance();
        return n;
    }

    std::string parse_attr_value() {
        if (eof() || (peek() != '"' && peek() != '\'')) fail("expected a quoted attribute value");
        char quote = advance();
        std::string v;
        while (!eof() && peek() != quote) {
            char c = advance();
            if (c == '&') {
                std::string ent;
                while (!eof() && peek() != ';' && ent.size() < 8) ent += advance();
                if (eof() || peek() != ';') fail("malformed entity reference");
                advance();
                if (ent == "amp") v += '&';
                else if (ent == "lt") v += '<';
                else if (ent == "gt") v += '>';
                else if (ent == "quot") v += '"';
                else if (ent == "apos") v += '\'';
                else fail("unknown entity &" + ent + ";");
            } else if (c == '<') {
                fail("'<' inside an attribute value");
            } else {
                v += c;
            }
        }
        if (eof()) fail("unterminated attribute value");
        advance();
        return v;
    }

    XmlNode parse_element() {
        XmlNode node;
        node.line = line_;
        node.col = col_;
        expect('<');
        node.name = parse_name();
        for (;;) {
            skip_ws();
            if (eof()) fail("unterminated element <" + node.name + ">");
            if (peek() == '/') {
                advance();
                expect('>');
                return node;  // self-closing
            }
            if (peek() == '>') {
                advance();
                break;
            }
            XmlAttr a;
            a.name = parse_name();
            skip_ws();
            expect('=');
            skip_ws();
            a.value = parse_attr_value();
            for (const auto& prev : node.attrs)
                if (prev.name == a.name) fail("duplicate attribute '" + a.name + "'");
            node.attrs.push_back(std::move(a));
        }
        for (;;) {
            skip_misc();
            if (eof()) fail("missing </" + node.name + ">");
            if (starts_with("</")) {
                advance();
                advance();
                std::string close = parse_name();
                if (close != node.name)
                    fail("mismatched close tag </" + close + ">, expected </" + node.name + ">");
                skip_ws();
                expect('>');
                return node;
            }
            node.children.push_back(parse_element());
        }
    }
};

// ---------------------------------------------------------------------------

double parse_number(const std::string& tok, const XmlNode& where) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw ParseError(where.line, where.col, "bad number '" + tok + "'");
    return v;
}

Vec3 parse_triple(const std::string& text, const XmlNode& where) {
    std::istringstream ss(text);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c) || (ss >> extra))
        throw ParseError(where.line, where.col, "expected three numbers, got '" + text + "'");
    return {parse_number(a, where), parse_number(b, where), parse_number(c, where)};
}

const std::string& required_attr(const XmlNode& n, const std::string& attr) {
    const std::string* v = n.attr(attr);
    if (!v)
        throw ParseError(n.line, n.col, "<" + n.name + "> is missing attribute '" + attr + "'");
    return *v;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void validate_tree(const RobotModel& m) {
    std::map<std::string, int> child_count;
    for (const auto& j : m.joints) {
        if (!m.has_link(j.parent_link))
            throw StructureError("joint '" + j.name + "' references unknown link '" +
                                 j.parent_link + "'");
        if (!m.has_link(j.child_link))
            throw StructureError("joint '" + j.name + "' references unknown link '" +
                                 j.child_link + "'");
        if (++child_count[j.child_link] > 1)
            throw StructureError("link '" + j.child_link + "' is the child of multiple joints");
    }
}

}  // namespace

int RobotModel::link_index(const std::string& n) const {
    for (size_t i = 0; i < links.size(); ++i)
        if (links[i] == n) return static_cast<int>(i);
    return -1;
}

std::vector<int> RobotModel::actuated_joints() const {
    std::vector<int> out;
    for (size_t i = 0; i < joints.size(); ++i)
        if (joints[i].actuated()) out.push_back(static_cast<int>(i));
    return out;
}

RobotModel parse_robot(const std::string& text) {
    XmlNode root = XmlReader(text).parse_document();
    if (root.name != "robot")
        throw ParseError(root.line, root.col,
                         "root element must be <robot>, got <" + root.name + ">");

    RobotModel m;
    if (const std::string* n = root.attr("name")) m.name = *n;

    for (const auto& node : root.children) {
        if (node.name == "link") {
            std::string name = required_attr(node, "name");
            if (m.has_link(name)) throw StructureError("duplicate link name '" + name + "'");
            m.links.push_back(name);
        } else if (node.name == "joint") {
            Joint j;
            j.name = required_attr(node, "name");
            for (const auto& other : m.joints)
                if (other.name == j.name)
                    throw StructureError("duplicate joint name '" + j.name + "'");
            const std::string& type = required_attr(node, "type");
            if (type == "revolute") j.kind = JointKind::revolute;
            else if (type == "prismatic") j.kind = JointKind::prismatic;
            else if (type == "fixed") j.kind = JointKind::fixed;
            else throw ParseError(node.line, node.col, "unsupported joint type '" + type + "'");

            const XmlNode* parent = node.child("parent");
            const XmlNode* child = node.child("child");
            if (!parent)
                throw ParseError(node.line, node.col, "joint '" + j.name + "' has no <parent>");
            if (!child)
                throw ParseError(node.line, node.col, "joint '" + j.name + "' has no <child>");
            j.parent_link = required_attr(*parent, "link");
            j.child_link = required_attr(*child, "link");

            if (const XmlNode* origin = node.child("origin")) {
                if (const std::string* xyz = origin->attr("xyz"))
                    j.origin_xyz = parse_triple(*xyz, *origin);
                if (const std::string* rpy = origin->attr("rpy"))
                    j.origin_rpy = parse_triple(*rpy, *origin);
            }
            j.origin = {rpy_to_quat(j.origin_rpy.x, j.origin_rpy.y, j.origin_rpy.z), j.origin_xyz};

            if (j.actuated()) {
                const XmlNode* axis = node.child("axis");
                if (!axis)
                    throw ValidationError("joint '" + j.name + "' (" + type + ") has no <axis>");
                j.axis = parse_triple(required_attr(*axis, "xyz"), *axis);
                double n = j.axis.norm();
                if (n < 1e-12)
                    throw ValidationError("joint '" + j.name + "' has a zero-length axis");
                if (std::abs(n - 1.0) > 1e-9) j.axis = j.axis * (1.0 / n);

                const XmlNode* limit = node.child("limit");
                if (!limit)
                    throw ValidationError("joint '" + j.name + "' (" + type + ") has no <limit>");
                j.limit_lo = parse_number(required_attr(*limit, "lower"), *limit);
                j.limit_hi = parse_number(required_attr(*limit, "upper"), *limit);
                if (j.limit_lo > j.limit_hi)
                    throw ValidationError("joint '" + j.name + "' has lower > upper limit");
            }
            m.joints.push_back(std::move(j));
        }
        // Anything else (visuals, inertials, materials...) is outside the subset.
    }

    if (m.links.empty()) throw StructureError("robot has no links");
    validate_tree(m);

    // Root: the unique link that is never a child.
    std::vector<std::string> roots;
    for (const auto& l : m.links) {
        bool is_child = false;
        for (const auto& j : m.joints)
            if (j.child_link == l) is_child = true;
        if (!is_child) roots.push_back(l);
    }
    if (roots.empty()) throw StructureError("no root link: the joint graph is cyclic");
    if (roots.size() > 1) {
        std::string msg = "multiple root links (disconnected tree):";
        for (const auto& r : roots) msg += " '" + r + "'";
        throw StructureError(msg);
    }
    m.root_link = roots[0];

    std::map<std::string, std::vector<int>> out_joints;
    for (size_t i = 0; i < m.joints.size(); ++i)
        out_joints[m.joints[i].parent_link].push_back(static_cast<int>(i));
    std::queue<std::string> frontier;
    frontier.push(m.root_link);
    size_t visited = 0;
    std::map<std::string, bool> seen;
    seen[m.root_link] = true;
    while (!frontier.empty()) {
        std::string l = frontier.front();
        frontier.pop();
        ++visited;
        for (int ji : out_joints[l]) {
            const std::string& c = m.joints[ji].child_link;
            if (!seen[c]) {
                seen[c] = true;
                frontier.push(c);
            }
        }
    }
    if (visited != m.links.size())
        throw StructureError("disconnected or cyclic kinematic graph: " +
                             std::to_string(m.links.size() - visited) +
                             " link(s) unreachable from root '" + m.root_link + "'");
    return m;
}

RobotModel parse_robot_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open robot description file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_robot(ss.str());
}

std::string serialize_robot(const RobotModel& m) {
    std::ostringstream out;
    out << "<robot name=\"" << escape(m.name) << "\">\n";
    for (const auto& l : m.links) out << "  <link name=\"" << escape(l) << "\"/>\n";
    for (const auto& j : m.joints) {
        const char* type = j.kind == JointKind::revolute    ? "revolute"
                           : j.kind == JointKind::prismatic ? "prismatic"
                                                            : "fixed";
        out << "  <joint name=\"" << escape(j.name) << "\" type=\"" << type << "\">\n";
        out << "    <parent link=\"" << escape(j.parent_link) << "\"/>\n";
        out << "    <child link=\"" << escape(j.child_link) << "\"/>\n";
        out << "    <origin xyz=\"" << fmt(j.origin_xyz.x) << " " << fmt(j.origin_xyz.y) << " "
            << fmt(j.origin_xyz.z) << "\" rpy=\"" << fmt(j.origin_rpy.x) << " "
            << fmt(j.origin_rpy.y) << " " << fmt(j.origin_rpy.z) << "\"/>\n";
        if (j.actuated()) {
            out << "    <axis xyz=\"" << fmt(j.axis.x) << " " << fmt(j.axis.y) << " "
                << fmt(j.axis.z) << "\"/>\n";
            out << "    <limit lower=\"" << fmt(j.limit_lo) << "\" upper=\"" << fmt(j.limit_hi)
                << "\"/>\n";
        }
        out << "  </joint>\n";
    }
    out << "</robot>\n";
    return out.str();
}

}  // namespace equibim
