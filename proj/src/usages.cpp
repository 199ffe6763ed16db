#include "gounsafe/usages.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "gounsafe/lexer.hpp"

namespace gounsafe {

namespace {

const std::unordered_map<std::string, ApiMember> kMembers = {
    {"Pointer", ApiMember::Pointer},
    {"Sizeof", ApiMember::Sizeof},
    {"Alignof", ApiMember::Alignof},
    {"Offsetof", ApiMember::Offsetof},
};

std::unordered_set<std::string> unsafe_aliases(const AstNode& root) {
    std::unordered_set<std::string> aliases;
    for (const auto& child : root.children) {
        if (child->kind != NodeKind::Import || child->text != "unsafe") continue;
        std::string local = child->detail.empty() ? "unsafe" : child->detail;
        if (local != "." && local != "_") aliases.insert(local);
    }
    return aliases;
}

// Names declared with an unsafe.Pointer type anywhere under the node:
// var specs, short declarations with an inferable conversion on the right,
// and function receiver/param/result fields.
void collect_pointer_names(const AstNode& node, std::unordered_set<std::string>& names) {
    bool typed = node.resolved_type == "unsafe.Pointer";
    if (typed && (node.kind == NodeKind::Declaration || node.kind == NodeKind::GlobalVarDecl ||
                  node.kind == NodeKind::ShortVarDecl)) {
        for (int i = 0; i < node.aux && i < static_cast<int>(node.children.size()); ++i) {
            if (node.children[i]->kind == NodeKind::Identifier)
                names.insert(node.children[i]->text);
        }
    }
    if (typed && node.kind == NodeKind::Field && !node.text.empty()) names.insert(node.text);
    for (const auto& child : node.children) collect_pointer_names(*child, names);
}

bool involves_unsafe_pointer(const AstNode& node, const std::unordered_set<std::string>& names) {
    if (node.kind == NodeKind::Cast && node.resolved_type == "unsafe.Pointer") return true;
    if (node.kind == NodeKind::SelectorChain && node.resolved_package == "unsafe" &&
        node.text == "Pointer")
        return true;
    if (node.kind == NodeKind::Identifier && names.count(node.text)) return true;
    for (const auto& child : node.children) {
        if (involves_unsafe_pointer(*child, names)) return true;
    }
    return false;
}

void collect_uintptr_conversions(const AstNode& node,
                                 const std::unordered_set<std::string>& pointer_names,
                                 std::vector<UnsafeUsageSite>& out, const SourceUnit& unit) {
    if (node.kind == NodeKind::Cast && node.resolved_type == "uintptr" &&
        !node.children.empty() && involves_unsafe_pointer(*node.children[0], pointer_names)) {
        UnsafeUsageSite site;
        site.unit = &unit;
        site.span = node.span;
        site.api_member = ApiMember::UintptrConversion;
        out.push_back(site);
    }
    for (const auto& child : node.children) {
        collect_uintptr_conversions(*child, pointer_names, out, unit);
    }
}

void find_context(const AstNode& node, int line, int col, ContextRef& best) {
    if (!node.span.contains(line, col)) return;
    if (node.kind == NodeKind::FunctionDecl) best = {ContextKind::FunctionBody, &node};
    if (node.kind == NodeKind::TypeDecl) best = {ContextKind::TypeDeclaration, &node};
    if (node.kind == NodeKind::GlobalVarDecl) best = {ContextKind::GlobalVariable, &node};
    for (const auto& child : node.children) find_context(*child, line, col, best);
}

}  // namespace

const char* api_member_name(ApiMember m) {
    switch (m) {
        case ApiMember::Pointer: return "Pointer";
        case ApiMember::Sizeof: return "Sizeof";
        case ApiMember::Alignof: return "Alignof";
        case ApiMember::Offsetof: return "Offsetof";
        case ApiMember::UintptrConversion: return "uintptr-conversion";
    }
    return "?";
}

const char* context_kind_name(ContextKind k) {
    switch (k) {
        case ContextKind::FunctionBody: return "function-body";
        case ContextKind::TypeDeclaration: return "type-declaration";
        case ContextKind::GlobalVariable: return "global-variable";
    }
    return "?";
}

std::vector<UnsafeUsageSite> find_unsafe_usages(const AstNode& root, const SourceUnit& unit) {
    auto aliases = unsafe_aliases(root);
    if (aliases.empty()) return {};

    std::vector<UnsafeUsageSite> sites;

    // Qualified identifiers are enumerated over the raw token stream so that
    // mentions inside degraded statements and function literals still count.
    std::vector<Token> tokens = lex(unit.text);
    for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
        if (tokens[i].kind != TokenKind::Ident || !aliases.count(tokens[i].text)) continue;
        if (tokens[i + 1].kind != TokenKind::Op || tokens[i + 1].text != ".") continue;
        if (tokens[i + 2].kind != TokenKind::Ident) continue;
        auto it = kMembers.find(tokens[i + 2].text);
        if (it == kMembers.end()) continue;
        UnsafeUsageSite site;
        site.unit = &unit;
        site.span.line = tokens[i].line;
        site.span.col = tokens[i].col;
        site.span.end_line = tokens[i + 2].line;
        site.span.end_col = tokens[i + 2].col + static_cast<int>(tokens[i + 2].text.size()) - 1;
        site.api_member = it->second;
        sites.push_back(site);
    }

    std::unordered_set<std::string> pointer_names;
    collect_pointer_names(root, pointer_names);
    collect_uintptr_conversions(root, pointer_names, sites, unit);

    std::stable_sort(sites.begin(), sites.end(), [](const auto& a, const auto& b) {
        if (a.span.line != b.span.line) return a.span.line < b.span.line;
        return a.span.col < b.span.col;
    });

    for (UnsafeUsageSite& site : sites) {
        ContextRef ctx;
        find_context(root, site.span.line, site.span.col, ctx);
        site.context = ctx;
    }
    return sites;
}

ContextRef resolve_usage_context(const AstNode& root, const UnsafeUsageSite& site) {
    ContextRef best;
    find_context(root, site.span.line, site.span.col, best);
    if (best.node == nullptr) {
        throw OrphanUsage("usage at " + std::to_string(site.span.line) + ":" +
                          std::to_string(site.span.col) + " has no enclosing declaration");
    }
    return best;
}

}  // namespace gounsafe
