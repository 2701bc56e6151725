"""Shared example programs and datasets used across the test suite."""

HELLO_WORLD = """\
@data input:"dataset.evt" output:"result.evt"
$all = echo #.*
$res = sma $all 0.1
$res += echo $all
save $res file:
"""

# same program with lines 3 and 4 swapped: '=' then rebinds $res and the
# raw records no longer reach the save node
HELLO_WORLD_SWAPPED = """\
@data input:"dataset.evt" output:"result.evt"
$all = echo #.*
$res += echo $all
$res = sma $all 0.1
save $res file:
"""

# echo -> tma -> sma -> ema chain; save gets the raw input and the ema output
CHAIN_CSV = """\
@data input:"dataset.csv" output:"result.evt"
$a = echo #.*
$b = tma $a 2
$b = sma $b 2
$a += ema $b 2
save $a file:
"""

CHAIN_DATASET_CSV = """\
time;toto
1;1.0
2;1.1
5;1.2
"""

CENTERED_AVERAGE = """\
@data input:"dataset.evt" output:"result.evt"
$all = echo #.*
$all = echoPast $all 5
$res = sma $all 10
save $res file:
"""

FUNCTION_EXAMPLE = """\
function f $a %w%
  $r = sd $a %w%
  $r += sma $r =%w%,2,*
  return $r
endfunction

function f_bis $a %w%
  $r = sd $a %w%
  return $r
  $r = sma $r =%w%,2,*
  return $r
endfunction

$c1 = echo "channel1"
$c2 = echo "channel2"
$res = call f $c1 5
$res += call f $c2 5
save $res file:"result.evt"
"""

OPERATOR_RECURSION = """\
$a = echo #.*
function f $b %n%
  global $result
  $b = delay $b 0.5
  $result += $b
  set %n% =%n%,1,-
  if =%n%,0,>
    call f $b %n%
  endif
endfunction
call f $a 3
save $result file:"result.evt"
"""

RECORD_RECURSION = """\
$a = echo #.*
recursive $x
$a = eq $a 3
$x += $a
$b = delay $x 0.5
$b = eq $b "value,1,-"
$b = passIf $b "value,0,>="
$x += $b
$result += echo $b
save $result file:"result.evt"
"""

VITALS_PIPELINE = """\
@data input:"vital.evt"
$all = echo #.*
$vitals = filter $all "(RR|HR|SPO2)"
set %win% 300
$feat = sma $vitals %win%
$feat += sd $vitals %win%
$HR = filter $vitals "HR"
$export = sample $vitals trigger:$HR
$active = active $vitals %win%
$export += sample $active trigger:$HR
saveBufferedCsv $export file:"data.csv"
save $feat file:"features.evt"
"""

HEARTBEAT_PIPELINE = """\
@data input:"vital.csv"
$vitals = echo #.*
$ekg = filter $vitals "EKG"
$a = range $ekg 0.05
$b = normalize $a 2 type:meansd
$c = layer $b thresholds:2 output:up
$heartbeat = rename $c "heartbeat"
$a = sinceLast $heartbeat 5
$a = eq $a "60,value,/"
$a = rename $a "heartrate"
$heartrate = passIfFast $a minValue:1 maxValue:180
$tosave = $heartbeat
$tosave += $heartrate
save $tosave file:"result.evt"
"""

ALL_PROGRAMS = {
    "hello_world": HELLO_WORLD,
    "hello_world_swapped": HELLO_WORLD_SWAPPED,
    "chain_csv": CHAIN_CSV,
    "centered_average": CENTERED_AVERAGE,
    "function_example": FUNCTION_EXAMPLE,
    "operator_recursion": OPERATOR_RECURSION,
    "record_recursion": RECORD_RECURSION,
    "vitals_pipeline": VITALS_PIPELINE,
    "heartbeat_pipeline": HEARTBEAT_PIPELINE,
}
