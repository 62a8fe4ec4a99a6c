#pragma once

#include <array>
#include <stdexcept>
#include <vector>

namespace cdanse {

/// Symmetric quadrature rule on the reference triangle (0,0)-(1,0)-(0,1),
/// stored as barycentric points with weights summing to the reference area 1/2.
struct QuadratureRule {
    struct Node {
        std::array<double, 3> bary;
        double weight;
    };
    std::vector<Node> nodes;
    int exactness_degree = 0;

    double weight_sum() const {
        double s = 0.0;
        for (const auto& n : nodes) s += n.weight;
        return s;
    }
};

/// Dunavant rules: 6-point degree 4 (the assembly baseline) and 12-point
/// degree 6 (switchable for integration-error studies).
inline QuadratureRule triangle_rule(int degree) {
    QuadratureRule rule;
    auto push3 = [&rule](double w, double a, double b) {
        // Permutations of (a, b, b).
        rule.nodes.push_back({{a, b, b}, w});
        rule.nodes.push_back({{b, a, b}, w});
        rule.nodes.push_back({{b, b, a}, w});
    };
    auto push6 = [&rule](double w, double a, double b, double c) {
        rule.nodes.push_back({{a, b, c}, w});
        rule.nodes.push_back({{a, c, b}, w});
        rule.nodes.push_back({{b, a, c}, w});
        rule.nodes.push_back({{b, c, a}, w});
        rule.nodes.push_back({{c, a, b}, w});
        rule.nodes.push_back({{c, b, a}, w});
    };
    if (degree <= 4) {
        rule.exactness_degree = 4;
        push3(0.5 * 0.223381589678011, 0.108103018168070, 0.445948490915965);
        push3(0.5 * 0.109951743655322, 0.816847572980459, 0.091576213509771);
    } else if (degree <= 6) {
        rule.exactness_degree = 6;
        push3(0.5 * 0.116786275726379, 0.501426509658179, 0.249286745170910);
        push3(0.5 * 0.050844906370207, 0.873821971016996, 0.063089014491502);
        push6(0.5 * 0.082851075618374, 0.053145049844816, 0.310352451033785, 0.636502499121399);
    } else {
        throw std::invalid_argument("triangle_rule: degree > 6 not available");
    }
    return rule;
}

}  // namespace cdanse
