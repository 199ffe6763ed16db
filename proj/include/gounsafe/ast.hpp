#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gounsafe/source.hpp"

namespace gounsafe {

enum class NodeKind {
    File,
    FunctionDecl,
    TypeDecl,
    GlobalVarDecl,
    Import,
    Declaration,
    ShortVarDecl,
    Assign,
    If,
    For,
    Switch,
    CaseClause,
    Select,
    Return,
    DeferStmt,
    GoStmt,
    Block,
    ExprStmt,
    Call,
    Cast,
    SelectorChain,
    UnaryOp,
    BinaryOp,
    CompositeLiteral,
    Index,
    KeyValue,
    Identifier,
    Literal,
    Field,
    Empty,
};

const char* node_kind_name(NodeKind kind);

// One node of the parsed Go subset.
//
// Layout conventions per kind (children order):
//   File           text=package name; children = imports then declarations
//   FunctionDecl   text=name; children = Field* (receiver/param/result, see
//                  Field.detail) then the body Block
//   TypeDecl       text=name; resolved_type = canonical underlying type;
//                  children = struct Fields when the underlying is a struct
//   GlobalVarDecl / Declaration
//                  aux = number of declared names; detail = "var"|"const";
//                  resolved_type = declared type text ("" if inferred);
//                  children = name Identifiers then initializer expressions
//   ShortVarDecl   aux = lhs count; children = lhs Identifiers then rhs exprs
//   Assign         text = operator ("=", "+=", "++", ...); aux = lhs count;
//                  children = lhs exprs then rhs exprs
//   If             detail contains 'i' when an init statement is present and
//                  'e' when an else branch is; children = [init?] cond then
//                  Block [else]
//   For            detail = "3" (init;cond;post, absent parts are Empty),
//                  "c" (condition only), "r" (range, text = ":=" or "=",
//                  aux = iteration variable count), "" (bare loop);
//                  body Block is always the last child
//   Switch         detail contains 'i'/'t' for init/tag presence; children =
//                  [init?] [tag?] CaseClause*
//   CaseClause     aux = number of case expressions (0 = default); children =
//                  case exprs then statements
//   Select         children = CaseClause* (aux 1 = comm case, 0 = default)
//   Return         children = result expressions
//   DeferStmt/GoStmt  children = the deferred/spawned call expression
//   ExprStmt       children = the expression, or empty with text = raw
//                  source when the construct was kept opaque
//   Call           children = callee then arguments; text = qualified callee
//                  name when resolvable; resolved_package = import path
//   Cast           resolved_type = target type; children = operand
//   SelectorChain  text = member name; children = base expression
//   UnaryOp/BinaryOp  text = operator; children = operand(s)
//   CompositeLiteral  resolved_type = literal type; children = elements
//   Index          children = base then index/slice expressions
//   Field          text = name ("" when unnamed); resolved_type = type;
//                  detail = "receiver"|"param"|"result"|"" (struct member)
struct AstNode {
    NodeKind kind = NodeKind::Empty;
    std::string text;
    std::string detail;
    std::string resolved_type;
    std::string resolved_package;
    int aux = 0;
    Span span;
    std::vector<std::unique_ptr<AstNode>> children;

    AstNode() = default;
    explicit AstNode(NodeKind k) : kind(k) {}

    AstNode* add_child(std::unique_ptr<AstNode> child) {
        children.push_back(std::move(child));
        return children.back().get();
    }
};

// Pretty-prints the AST back to parseable Go source for the supported subset.
std::string print_ast(const AstNode& node);

// Renders a single expression subtree (no trailing newline).
std::string print_expr(const AstNode& node);

// Structural equality ignoring spans (printer round-trip oracle).
bool ast_equal(const AstNode& a, const AstNode& b);

}  // namespace gounsafe
