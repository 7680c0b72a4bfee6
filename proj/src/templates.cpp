// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <set>

#include "cotforget/error.hpp"
#include "cotforget/llm.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

TemplateRegistry TemplateRegistry::load(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto manifest_path = (fs::path(dir) / "templates.json").string();
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad template manifest " + manifest_path + ": " + e.what());
    }
    TemplateRegistry reg;
    for (const auto& [id, entry] : manifest.at("templates").items()) {
        PromptTemplate t;
        t.id = id;
        t.version = entry.at("version").get<std::string>();
        t.text = read_file((fs::path(dir) / entry.at("file").get<std::string>()).string());
        reg.add(std::move(t));
    }
    return reg;
}

void TemplateRegistry::add(PromptTemplate t) {
    auto id = t.id;
    templates_[id] = std::move(t);
}

const PromptTemplate& TemplateRegistry::get(const std::string& id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) throw ConfigError("prompt template not registered: " + id);
    return it->second;
}

namespace {

bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Piece {
    bool placeholder = false;
    std::string text;  // literal text or placeholder name
};

// Literal runs and `{name}` / `{{name}}` placeholders, in order.
std::vector<Piece> pieces_of(const std::string& src) {
    std::vector<Piece> out;
    std::string literal;
    size_t i = 0;
    while (i < src.size()) {
        if (src[i] == '{') {
            const bool doubled = i + 1 < src.size() && src[i + 1] == '{';
            const size_t name_start = i + (doubled ? 2 : 1);
            size_t j = name_start;
            while (j < src.size() && is_ident(src[j])) ++j;
            const bool closed = j > name_start && j < src.size() && src[j] == '}' &&
                                (!doubled || (j + 1 < src.size() && src[j + 1] == '}'));
            if (closed) {
                if (!literal.empty()) out.push_back({false, std::move(literal)});
                literal.clear();
                out.push_back({true, src.substr(name_start, j - name_start)});
                i = j + (doubled ? 2 : 1);
                continue;
            }
        }
        literal.push_back(src[i]);
        ++i;
    }
    if (!literal.empty()) out.push_back({false, std::move(literal)});
    return out;
}

}  // namespace

FilledPrompt TemplateRegistry::fill(const std::string& id, const std::map<std::string, std::string>& fillers) const {
    const auto& t = get(id);
    std::string out;
    out.reserve(t.text.size() + 256);
    std::set<std::string> used;
    for (const auto& piece : pieces_of(t.text)) {
        if (!piece.placeholder) {
            out += piece.text;
            continue;
        }
        const auto it = fillers.find(piece.text);
        if (it == fillers.end()) throw ValidationError("template " + id + " needs filler '" + piece.text + "'");
        out += it->second;
        used.insert(piece.text);
    }
    for (const auto& [name, _] : fillers) {
        if (!used.count(name)) throw ValidationError("template " + id + " has no placeholder '" + name + "'");
    }
    return {t.id, t.version, std::move(out)};
}

std::optional<std::map<std::string, std::string>> match_template(const PromptTemplate& t, const std::string& prompt) {
    const auto pieces = pieces_of(t.text);
    std::map<std::string, std::string> values;
    size_t pos = 0;
    for (size_t k = 0; k < pieces.size(); ++k) {
        const auto& piece = pieces[k];
        if (!piece.placeholder) {
            if (prompt.compare(pos, piece.text.size(), piece.text) != 0) return std::nullopt;
            pos += piece.text.size();
            continue;
        }
        size_t stop = prompt.size();
        if (k + 1 < pieces.size() && !pieces[k + 1].placeholder) {
            stop = prompt.find(pieces[k + 1].text, pos);
            if (stop == std::string::npos) return std::nullopt;
        }
        values[piece.text] = prompt.substr(pos, stop - pos);
        pos = stop;
    }
    return values;
}

}  // namespace cotforget
