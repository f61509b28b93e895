color = "#ff0000"  # red
tag = '# not a comment'
