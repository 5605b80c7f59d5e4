#pragma once

#include "geobeam/common.hpp"

#include <memory>

namespace geobeam {

// Arithmetic expressions over x1, x2, x3, r, theta with + - * / ^, unary minus,
// sin cos exp sqrt abs log, and the constants pi and i. Complex valued.
// r is the Euclidean norm of the whole point, theta = atan2(x2, x1).
class Expr {
public:
    static Expr parse(const std::string& text);

    cplx operator()(const Vec& x) const;
    const std::string& text() const { return text_; }
    // largest coordinate index referenced (x3 -> 3); theta counts as 2
    int max_coordinate() const { return max_coord_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
    int max_coord_ = 0;
};

} // namespace geobeam
