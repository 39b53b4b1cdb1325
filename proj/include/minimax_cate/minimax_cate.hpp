#pragma once

#include "minimax_cate/core.hpp"
#include "minimax_cate/closed_form.hpp"
#include "minimax_cate/qp.hpp"
#include "minimax_cate/designs.hpp"
#include "minimax_cate/oracle.hpp"
#include "minimax_cate/simulate.hpp"
#include "minimax_cate/io.hpp"
