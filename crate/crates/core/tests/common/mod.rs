use accfg::ir::Rule;

/// Twelve programs the verifier must reject, with the rules it must cite.
pub const INVALID: [(&str, &str, &[Rule]); 12] = [
    (
        "use before def",
        r#"func @f() {
          %x = add %y, %y : i32
          %y = const 2 : i32
        }"#,
        &[Rule::Dominance, Rule::Dominance],
    ),
    (
        "loop value escapes its body",
        r#"func @f() {
          for %i = 0 to 4 step 1 {
            %c = const 1 : i64
          }
          %d = add %c, %c : i64
        }"#,
        &[Rule::Dominance, Rule::Dominance],
    ),
    (
        "branch value used in sibling branch",
        r#"func @f() {
          %c = const 1 : i1
          if %c {
            %a = const 7 : i32
          } else {
            %b = add %a, %a : i32
          }
        }"#,
        &[Rule::Dominance, Rule::Dominance],
    ),
    (
        "stale state launched",
        r#"accel "a"
        func @f() {
          %c = const 1 : i32
          %s1 = setup "a" (k = %c) : state<"a">
          %s2 = setup "a" (k = %c) from %s1 : state<"a">
          %t = launch %s1 ops = 4 : token<"a">
        }"#,
        &[Rule::LiveState],
    ),
    (
        "stale state as setup input",
        r#"accel "a"
        func @f() {
          %c = const 1 : i32
          %s1 = setup "a" (k = %c) : state<"a">
          %s2 = setup "a" (k = %c) : state<"a">
          %s3 = setup "a" (j = %c) from %s1 : state<"a">
        }"#,
        &[Rule::LiveState],
    ),
    (
        "token awaited twice",
        r#"accel "a"
        func @f() {
          %s = setup "a" () : state<"a">
          %t = launch %s ops = 4 : token<"a">
          await %t
          await %t
        }"#,
        &[Rule::DoubleAwait],
    ),
    (
        "token awaited in a nested loop",
        r#"accel "a"
        func @f() {
          %s = setup "a" () : state<"a">
          %t = launch %s ops = 4 : token<"a">
          for %i = 0 to 2 step 1 {
            await %t
          }
        }"#,
        &[Rule::DoubleAwait],
    ),
    (
        "mixed arithmetic widths",
        r#"func @f() {
          %a = const 1 : i32
          %b = const 2 : i64
          %c = add %a, %b : i32
        }"#,
        &[Rule::Type],
    ),
    (
        "non-boolean condition",
        r#"func @f() {
          %c = const 1 : i32
          if %c {
          } else {
          }
        }"#,
        &[Rule::Type],
    ),
    (
        "state from another accelerator",
        r#"accel "a"
        accel "b"
        func @f() {
          %c = const 1 : i32
          %s = setup "a" (k = %c) : state<"a">
          %r = setup "b" (k = %c) from %s : state<"b">
        }"#,
        &[Rule::Type],
    ),
    (
        "token used as a field value",
        r#"accel "a"
        func @f() {
          %s = setup "a" () : state<"a">
          %t = launch %s ops = 4 : token<"a">
          %r = setup "a" (k = %t) from %s : state<"a">
        }"#,
        &[Rule::Type, Rule::Type],
    ),
    (
        "field written twice and zero step",
        r#"accel "a"
        func @f() {
          %c = const 1 : i32
          %s = setup "a" (k = %c, k = %c) : state<"a">
          for %i = 0 to 4 step 0 {
          }
        }"#,
        &[Rule::Attr, Rule::Attr],
    ),
];
