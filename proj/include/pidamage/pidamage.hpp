#pragma once

#include "pidamage/config.hpp"
#include "pidamage/damage_cell.hpp"
#include "pidamage/error.hpp"
#include "pidamage/evaluator.hpp"
#include "pidamage/figures.hpp"
#include "pidamage/fleet.hpp"
#include "pidamage/io.hpp"
#include "pidamage/numerics.hpp"
#include "pidamage/random.hpp"
#include "pidamage/stress_mlp.hpp"
#include "pidamage/trainer.hpp"
