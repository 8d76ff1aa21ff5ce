#include "pdvf/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pdvf {

namespace {

constexpr float kRoomSize = 5.0f;
constexpr float kDoorHalfWidth = 0.5f;  // door size 1, centered at x = 2.5
constexpr float kDt = 0.3f;
constexpr float kRewardDecay = 3.0f;
constexpr int kSpaceshipCap = 50;  // episode ends once more steps were taken

constexpr float kPointDt = 0.1f;
constexpr float kWindStrength = 0.5f;
constexpr float kWindDrag = 0.1f;
constexpr int kPointCap = 100;

const Eigen::Vector2f kCharge1Pos(1.5f, 2.5f);
const Eigen::Vector2f kCharge2Pos(3.5f, 2.5f);
constexpr float kSoftening = 0.25f;

const float kDragTable[3] = {0.05f, 0.2f, 0.5f};

bool in_door(const Eigen::Vector2f& x) {
    return x.y() >= kRoomSize && std::abs(x.x() - 2.5f) <= kDoorHalfWidth;
}

bool in_room(const Eigen::Vector2f& x) {
    return x.x() >= 0.f && x.x() <= kRoomSize && x.y() >= 0.f && x.y() <= kRoomSize;
}

}  // namespace

std::string family_name(Family f) {
    switch (f) {
        case Family::Spaceship: return "spaceship";
        case Family::WindPoint: return "windpoint";
        case Family::DragGrid: return "draggrid";
    }
    return "unknown";
}

Family family_from_name(const std::string& name) {
    if (name == "spaceship") return Family::Spaceship;
    if (name == "windpoint") return Family::WindPoint;
    if (name == "draggrid") return Family::DragGrid;
    fail("unknown family '", name, "'");
}

int FamilySpec::state_dim() const {
    return family == Family::Spaceship ? 2 : 4;
}

int FamilySpec::action_dim() const { return 2; }

FamilySpec default_family_spec(Family family) {
    FamilySpec spec;
    spec.family = family;
    if (family == Family::DragGrid) {
        // codes 0..8 enumerate (i, j) over the drag table; hold out the four
        // pairs where both axes are extreme
        for (int code = 0; code < 9; ++code) {
            int i = code / 3, j = code % 3;
            if (i == 1 || j == 1)
                spec.train_d.push_back(code);
            else
                spec.test_d.push_back(code);
        }
        spec.episode_cap = kPointCap;
        spec.n_probe = 4;
    } else {
        for (int i = 1; i <= 20; ++i) {
            double d = i * std::numbers::pi / 10.0;
            if (i <= 15)
                spec.train_d.push_back(d);
            else
                spec.test_d.push_back(d);
        }
        spec.episode_cap = family == Family::Spaceship ? kSpaceshipCap : kPointCap;
        spec.n_probe = family == Family::Spaceship ? 1 : 2;
    }
    return spec;
}

Eigen::Vector2f spaceship_field(const Eigen::Vector2f& x, double d) {
    float q[2] = {float(std::cos(d)), float(std::sin(d))};
    const Eigen::Vector2f* pos[2] = {&kCharge1Pos, &kCharge2Pos};
    Eigen::Vector2f f = Eigen::Vector2f::Zero();
    for (int i = 0; i < 2; ++i) {
        Eigen::Vector2f r = x - *pos[i];
        float denom = std::pow(r.squaredNorm() + kSoftening, 1.5f);
        f += q[i] * r / denom;
    }
    return f;
}

float spaceship_terminal_reward(const Eigen::Vector2f& x) {
    Eigen::Vector2f door(2.5f, kRoomSize);
    return std::exp(-kRewardDecay * (x - door).norm());
}

Eigen::Vector2f drag_coefficients(int code) {
    require(code >= 0 && code < 9, "drag_coefficients: code ", code, " out of range");
    return {kDragTable[code / 3], kDragTable[code % 3]};
}

EnvInstance::EnvInstance(Family family, double d, uint64_t rng_seed)
    : family_(family), d_(d), seed_(rng_seed) {
    reset();
}

int EnvInstance::state_dim() const { return family_ == Family::Spaceship ? 2 : 4; }
int EnvInstance::action_dim() const { return 2; }
int EnvInstance::episode_cap() const {
    return family_ == Family::Spaceship ? kSpaceshipCap : kPointCap;
}

VecF EnvInstance::reset() {
    step_count_ = 0;
    done_ = false;
    if (family_ == Family::Spaceship) {
        state_ = VecF(2);
        state_ << 2.5f, 0.2f;
    } else {
        state_ = VecF::Zero(4);  // position then velocity
    }
    return state_;
}

StepResult EnvInstance::step(const VecF& action) {
    require(!done_, "step: episode already finished (", family_name(family_),
            ", d=", d_, ")");
    require(action.size() == action_dim(), "step: action dim ", action.size(),
            ", expected ", action_dim());
    require(action.allFinite(), "step: non-finite action");

    StepResult out;
    ++step_count_;
    if (family_ == Family::Spaceship) {
        Eigen::Vector2f x(state_(0), state_(1));
        Eigen::Vector2f a(action(0), action(1));
        float norm = a.norm();
        Eigen::Vector2f ahat = norm > 1e-8f ? Eigen::Vector2f(a / norm)
                                            : Eigen::Vector2f::Zero();
        Eigen::Vector2f next = x + kDt * (ahat + spaceship_field(x, d_));
        bool finished = !in_room(next) || in_door(next) || step_count_ > kSpaceshipCap;
        state_ = VecF(2);
        state_ << next.x(), next.y();
        done_ = finished;
        out.reward = finished ? spaceship_terminal_reward(next) : 0.f;
    } else {
        Eigen::Vector2f pos(state_(0), state_(1));
        Eigen::Vector2f vel(state_(2), state_(3));
        Eigen::Vector2f a(std::clamp(action(0), -1.f, 1.f),
                          std::clamp(action(1), -1.f, 1.f));
        Eigen::Vector2f accel;
        if (family_ == Family::WindPoint) {
            Eigen::Vector2f wind(kWindStrength * float(std::cos(d_)),
                                 kWindStrength * float(std::sin(d_)));
            accel = a + wind - kWindDrag * vel;
        } else {
            Eigen::Vector2f drag = drag_coefficients(int(d_));
            accel = a - Eigen::Vector2f(drag.x() * vel.x(), drag.y() * vel.y());
        }
        vel += kPointDt * accel;
        pos += kPointDt * vel;
        state_ = VecF(4);
        state_ << pos.x(), pos.y(), vel.x(), vel.y();
        done_ = step_count_ >= kPointCap;
        out.reward = 0.1f * vel.x() - 0.01f * a.squaredNorm();
    }
    out.state = state_;
    out.done = done_;
    return out;
}

std::vector<EnvInstance> make_family(const FamilySpec& spec) {
    for (double d : spec.train_d)
        for (double t : spec.test_d)
            require(d != t, "make_family: train/test overlap at d=", d);
    std::vector<EnvInstance> envs;
    envs.reserve(spec.train_d.size() + spec.test_d.size());
    uint64_t idx = 0;
    for (double d : spec.train_d) envs.emplace_back(spec.family, d, idx++);
    for (double d : spec.test_d) envs.emplace_back(spec.family, d, idx++);
    return envs;
}

}  // namespace pdvf
