#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gounsafe/ast.hpp"
#include "gounsafe/usages.hpp"

namespace gounsafe {

class UnsupportedContext : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EdgeKind { Flow, AltFlow, Decl, Use, DirUse, Update, Assign, Call, Contains };
constexpr int kEdgeKindCount = 9;

const char* edge_kind_name(EdgeKind k);
EdgeKind edge_kind_from_name(const std::string& name);

enum class VertexKind { Statement, Variable };

enum class LabelCategory {
    StatementType,
    Operator,
    VariableType,
    SelfRef,
    Builtin,
    Datatype,
    Function,
    Package,
    VariableName,
};

const char* label_category_name(LabelCategory c);

// One vertex label: a category plus its text, e.g. (Operator, "binary/+") or
// (Datatype, "map[string]**[]int"). Vertices hold sorted, duplicate-free
// label sets.
struct Label {
    LabelCategory category;
    std::string text;

    bool operator==(const Label&) const = default;
    auto operator<=>(const Label&) const = default;
};

std::string label_to_string(const Label& label);

struct Vertex {
    int id = 0;
    VertexKind kind = VertexKind::Statement;
    std::vector<Label> labels;
    Span span;
    std::string name;  // variable vertices only

    void add_label(Label label);
    bool has_label(const Label& label) const;
    const std::string* label_text(LabelCategory c) const;
};

struct Edge {
    int src = 0;
    int dst = 0;
    EdgeKind kind = EdgeKind::Flow;

    bool operator==(const Edge&) const = default;
};

enum class CfgContextType { Function, GlobalVariable, TypeDefinition };

const char* cfg_context_type_name(CfgContextType t);

struct EnrichedCfg {
    std::vector<Vertex> vertices;
    std::vector<Edge> edges;
    CfgContextType context_type = CfgContextType::Function;
    std::vector<std::pair<UnsafeUsageSite, int>> usage_vertices;

    // AST statement behind each vertex (null for pseudo and variable
    // vertices) and the expression subtrees attributed to it. Carried for
    // the labeling pass, not serialized; valid while the parse tree lives.
    std::vector<const AstNode*> vertex_nodes;
    std::vector<std::vector<const AstNode*>> vertex_exprs;
};

// Builds the structural graph for one usage context: statement vertices in
// source order (entry first, exit last for functions), variable vertices in
// first-reference order, flow/alt-flow control edges, and the memory-access
// edges (decl/use/dir-use/update/assign/call/contains). Statement vertices
// carry their statement-type label and variable vertices their name and
// param/result/receiver labels; semantic labels come from label_vertices.
EnrichedCfg build_cfg(const ContextRef& context, const std::vector<UnsafeUsageSite>& sites);

// Adds operator, datatype, function, package, builtin, and self-reference
// labels to a structurally complete graph. root and unit supply the import
// table, package-level declarations, and module path.
EnrichedCfg label_vertices(EnrichedCfg cfg, const ContextRef& context, const AstNode& root,
                           const SourceUnit& unit);

// Checks every structural invariant; returns one human-readable violation
// per breach, empty when the graph is well formed.
std::vector<std::string> validate_cfg(const EnrichedCfg& cfg);

// Line-oriented serialization used for golden files: one record per line,
// tab-separated fields, vertices before edges before usage mappings.
std::string dump_cfg(const EnrichedCfg& cfg);

// Decomposes a canonical type text into its datatype label set: the full
// text plus one label per basic type and composition structure, so
// map[string]**[]int yields six labels.
std::vector<Label> decompose_type(const std::string& type);

}  // namespace gounsafe
