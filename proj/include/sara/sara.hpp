// sara.hpp - umbrella include.

#ifndef SARA_SARA_HPP
#define SARA_SARA_HPP

#include "sara/adapters.hpp"
#include "sara/analysis.hpp"
#include "sara/autograd.hpp"
#include "sara/checkpoint.hpp"
#include "sara/format.hpp"
#include "sara/matrix.hpp"
#include "sara/model.hpp"
#include "sara/optim.hpp"
#include "sara/rank_select.hpp"
#include "sara/rng.hpp"
#include "sara/svd.hpp"
#include "sara/tasks.hpp"
#include "sara/train.hpp"

#endif // SARA_SARA_HPP
