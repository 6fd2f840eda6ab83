#include "sodkit/params.hpp"

#include "sodkit/errors.hpp"

namespace sodkit {

void ParameterRegistry::check_unique(const std::string& name) const {
    if (find_parameter(name) || find_buffer(name)) throw ContractError("duplicate tensor name: " + name);
}

Var ParameterRegistry::add_parameter(std::string name, Tensor init, ParamGroup group, bool weight_decay) {
    check_unique(name);
    Var v(std::move(init), true);
    parameters_.push_back({std::move(name), v, group, weight_decay});
    return v;
}

Var ParameterRegistry::add_buffer(std::string name, Tensor init) {
    check_unique(name);
    Var v(std::move(init), false);
    buffers_.push_back({std::move(name), v});
    return v;
}

const NamedParameter* ParameterRegistry::find_parameter(std::string_view name) const {
    for (const auto& p : parameters_)
        if (p.name == name) return &p;
    return nullptr;
}

const NamedBuffer* ParameterRegistry::find_buffer(std::string_view name) const {
    for (const auto& b : buffers_)
        if (b.name == name) return &b;
    return nullptr;
}

void ParameterRegistry::zero_grad() {
    for (auto& p : parameters_) {
        Var v = p.var;
        v.zero_grad();
    }
}

std::size_t ParameterRegistry::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.var.value().numel();
    return n;
}

}  // namespace sodkit
