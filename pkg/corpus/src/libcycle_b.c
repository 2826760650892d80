int cycle_ping_a(int n);

int cycle_ping_b(int n)
{
    if (n <= 0)
        return 1;
    return cycle_ping_a(n - 1);
}
