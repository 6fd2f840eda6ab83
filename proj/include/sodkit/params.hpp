#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sodkit/autograd.hpp"

namespace sodkit {

// Learning-rate group. Encoder weights train at the backbone rate, everything
// added on top of the encoder at the branch rate.
enum class ParamGroup { kBackbone, kBranch };

struct NamedParameter {
    std::string name;
    Var var;
    ParamGroup group;
    bool weight_decay;  // false for normalization scales/shifts and biases
};

struct NamedBuffer {
    std::string name;
    Var var;
};

class ParameterRegistry {
  public:
    Var add_parameter(std::string name, Tensor init, ParamGroup group, bool weight_decay);
    Var add_buffer(std::string name, Tensor init);

    std::span<const NamedParameter> parameters() const { return parameters_; }
    std::span<const NamedBuffer> buffers() const { return buffers_; }

    const NamedParameter* find_parameter(std::string_view name) const;
    const NamedBuffer* find_buffer(std::string_view name) const;

    void zero_grad();
    std::size_t parameter_count() const;

  private:
    void check_unique(const std::string& name) const;

    std::vector<NamedParameter> parameters_;
    std::vector<NamedBuffer> buffers_;
};

}  // namespace sodkit
