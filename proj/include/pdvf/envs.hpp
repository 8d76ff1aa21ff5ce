#pragma once

#include "pdvf/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pdvf {

enum class Family { Spaceship, WindPoint, DragGrid };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct Transition {
    VecF s;
    VecF a;
    float r = 0.f;
    VecF s_next;
    bool done = false;
};

struct StepResult {
    VecF state;
    float reward = 0.f;
    bool done = false;
};

// Hidden-parameter family description. For the continuous families the
// parameter is an angle; DragGrid uses integer codes into a per-axis drag
// table. Train and test parameter lists are disjoint by construction.
struct FamilySpec {
    Family family = Family::Spaceship;
    std::vector<double> train_d;
    std::vector<double> test_d;
    int episode_cap = 50;
    int n_probe = 1;  // probe steps used to infer the dynamics embedding

    int state_dim() const;
    int action_dim() const;
};

// Defaults: continuous families get d = i*pi/10 for i = 1..20 with 1..15 for
// training and 16..20 held out; DragGrid enumerates the 3x3 drag pairs with
// the four both-extreme pairs held out.
FamilySpec default_family_spec(Family family);

// One environment with a fixed hidden dynamics parameter. The observable
// state never contains d.
class EnvInstance {
public:
    EnvInstance(Family family, double d, uint64_t rng_seed = 0);

    VecF reset();
    StepResult step(const VecF& action);

    Family family() const { return family_; }
    double d() const { return d_; }
    uint64_t seed() const { return seed_; }
    int step_count() const { return step_count_; }
    bool done() const { return done_; }
    const VecF& state() const { return state_; }
    int state_dim() const;
    int action_dim() const;
    int episode_cap() const;

private:
    Family family_;
    double d_;
    uint64_t seed_;
    int step_count_ = 0;
    bool done_ = true;
    VecF state_;
};

// Net force at x from the two fixed charges; charge magnitudes are
// (cos d, sin d), positions (1.5, 2.5) and (3.5, 2.5), softened by 0.25.
Eigen::Vector2f spaceship_field(const Eigen::Vector2f& x, double d);

// Terminal reward: exp(-3 * distance to the door center (2.5, 5)).
float spaceship_terminal_reward(const Eigen::Vector2f& x);

// DragGrid code -> (drag_x, drag_y) from the set {0.05, 0.2, 0.5}.
Eigen::Vector2f drag_coefficients(int code);

// Instantiates every train and test environment of the family, train first.
// Errors if the train and test parameter lists overlap.
std::vector<EnvInstance> make_family(const FamilySpec& spec);

}  // namespace pdvf
